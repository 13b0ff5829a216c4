"""Public-transport trip recognition from device traces, live fleet
positions and static timetables."""

__version__ = "0.1.0"
