"""Capacity of remotely powered noiseless channels with a finite battery."""
