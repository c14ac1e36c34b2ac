"""Discrete-event simulation of the warehouse network: channel, MAC, nodes and trials."""
