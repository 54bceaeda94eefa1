"""
Utility modules for t1track
"""
