"""Tests for calkit, the Calderón problem numerical lab."""
