"""Manager service: registries, queues, scheduler, monitors, REST surface."""
