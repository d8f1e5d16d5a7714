"""Four-panel figure rendering for droplet1d frame CSVs.

Consumes the frame CSV format of the simulator (metadata comment lines, then
x,rho,p,u,T,phase rows) and renders the standard 2x2 panel layout:
log10 density, pressure, velocity, temperature versus position. Run A draws
as solid lines, an optional run B as circle markers.
"""

from .frames import Frame, load_frame_at
from .render import FigureSpec, render_figure

__all__ = ["Frame", "FigureSpec", "load_frame_at", "render_figure"]

__version__ = "0.1.0"
