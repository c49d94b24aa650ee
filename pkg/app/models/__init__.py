"""Domain models for the Aniso toolkit"""
