"""I/O helpers for the offgrid CLI: CSV records, SVG plots and output directories."""
