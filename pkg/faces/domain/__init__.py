"""Pure geometry, rendering, losses, metrics and the services built on them."""
