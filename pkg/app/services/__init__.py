"""Numerical services for the Aniso toolkit"""
