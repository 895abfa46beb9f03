"""Truncated power series in hbar^2 with coefficients of a generic kind
(numbers, grid tables, expression trees): the carrier for Hamiltonian
inputs H0 + hbar^2 M, energy functions f + hbar^2 g (+ hbar^4 g1), and
deformed-form coefficient stacks."""

from __future__ import annotations


class HSeries:
    """coeffs[k] multiplies hbar^(2k); arithmetic is coefficient-wise and
    truncates to the shorter operand."""

    __slots__ = ("coeffs",)

    def __init__(self, *coeffs):
        if len(coeffs) == 1 and isinstance(coeffs[0], (list, tuple)):
            coeffs = tuple(coeffs[0])
        self.coeffs = list(coeffs)

    @property
    def order(self):
        """Highest power of hbar represented (2 * (len - 1))."""
        return 2 * (len(self.coeffs) - 1)

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, k):
        return self.coeffs[k]

    def __add__(self, other):
        n = min(len(self), len(other))
        return HSeries([self.coeffs[k] + other.coeffs[k] for k in range(n)])

    def __sub__(self, other):
        n = min(len(self), len(other))
        return HSeries([self.coeffs[k] - other.coeffs[k] for k in range(n)])

    def scale(self, c):
        return HSeries([c * x for x in self.coeffs])

    def map(self, fn):
        return HSeries([fn(x) for x in self.coeffs])

    def __call__(self, hbar):
        """Evaluate at a numeric hbar (coefficients must support + and *)."""
        out = None
        for k, c in enumerate(self.coeffs):
            term = c * hbar ** (2 * k)
            out = term if out is None else out + term
        return out

    def __repr__(self):
        return f"HSeries({len(self.coeffs)} coefficients, order hbar^{self.order})"
