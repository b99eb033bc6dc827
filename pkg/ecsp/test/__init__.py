"""Tests for ecsp

"""
