"""Phase-field gradient flows on periodic 2D grids."""
