"""Monte-Carlo engine, claim experiments, configuration and CLI."""
