"""Tests for UniLife Backend"""
