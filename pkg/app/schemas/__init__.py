"""Pydantic schemas for configs and reports"""
