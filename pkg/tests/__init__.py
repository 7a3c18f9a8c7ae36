"""
Test suite for the domain-shift lab
"""
