"""Functional-calculus graph filters, stability certificates and transferability tools."""
