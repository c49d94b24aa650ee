"""Utility helpers for the Aniso toolkit"""
