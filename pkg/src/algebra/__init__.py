"""Algebra package - polynomials, pencils and oblique projections."""
