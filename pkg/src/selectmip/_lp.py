"""Minimal writer for CPLEX-style LP files."""

from __future__ import annotations

from typing import Iterable, Sequence

Term = tuple[float, str]


def format_number(x: float) -> str:
    if x == 0:
        return "0"
    text = f"{x:.12g}"
    return "0" if text == "-0" else text


def format_terms(terms: Sequence[Term]) -> str:
    """Render a linear expression; unit coefficients print as bare names."""
    parts: list[str] = []
    for coeff, name in terms:
        if coeff == 0:
            continue
        sign = "-" if coeff < 0 else "+"
        mag = abs(coeff)
        body = name if mag == 1 else f"{format_number(mag)} {name}"
        if not parts:
            parts.append(body if sign == "+" else f"- {body}")
        else:
            parts.append(f"{sign} {body}")
    if not parts:
        return "0 " + (terms[0][1] if terms else "x0")
    return " ".join(parts)


class LpWriter:
    def __init__(self, name: str, sense: str) -> None:
        if sense not in ("Minimize", "Maximize"):
            raise ValueError(f"unknown sense {sense!r}")
        self.name = name
        self.sense = sense
        self.objective: list[Term] = []
        self.rows: list[str] = []
        self.free_vars: list[str] = []
        self.binary_vars: list[str] = []

    def add_objective_term(self, coeff: float, var: str) -> None:
        if coeff != 0:
            self.objective.append((coeff, var))

    def add_row(self, name: str, terms: Sequence[Term], sense: str, rhs: float) -> None:
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"unknown row sense {sense!r}")
        self.rows.append(f" {name}: {format_terms(terms)} {sense} {format_number(rhs)}")

    def add_free(self, *names: str) -> None:
        self.free_vars.extend(names)

    def add_binary(self, names: Iterable[str]) -> None:
        self.binary_vars.extend(names)

    def render(self) -> str:
        lines = [f"\\ {self.name}", self.sense]
        obj = format_terms(self.objective) if self.objective else "0 " + self.binary_vars[0]
        lines.append(f" obj: {obj}")
        lines.append("Subject To")
        lines.extend(self.rows)
        if self.free_vars:
            lines.append("Bounds")
            lines.extend(f" {v} free" for v in self.free_vars)
        if self.binary_vars:
            lines.append("Binaries")
            lines.append(" " + " ".join(self.binary_vars))
        lines.append("End")
        return "\n".join(lines) + "\n"
