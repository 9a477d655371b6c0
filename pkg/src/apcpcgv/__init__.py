"""Toolchain for an asynchronous priority-typed session pi-calculus (APCP)
and a concurrent lambda-calculus with buffered sessions (CGV), with a typed
translation between them and desk-scale semantic verifiers."""

__version__ = "0.1.0"
