"""Doubly robust estimation of main and spillover effects in twin pairs."""
