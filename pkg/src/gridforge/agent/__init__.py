"""Client agent: status reporting, dispatch intake, staging, and execution."""
