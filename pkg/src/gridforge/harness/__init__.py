"""Multi-client simulation harness: loopback cluster, faults, trace checks."""
