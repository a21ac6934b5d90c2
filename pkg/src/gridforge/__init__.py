"""gridforge: run user code across idle machines on a LAN.

A manager service queues execution requests and fans their instances out to
client agents, which build isolated execution environments, run each instance
detached, and ship the outputs back. Failed or unreachable clients are handled
by cancelling their runs and redistributing the affected ranks elsewhere, so a
request completes as long as any client stays up.
"""

__version__ = "0.1.0"
