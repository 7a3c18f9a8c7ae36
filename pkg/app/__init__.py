"""
Desk-scale transfer-learning lab for collider-physics tasks under domain shift
"""

__version__ = '1.0.0'
