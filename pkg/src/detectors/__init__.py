"""
Image analysis for HomeSentinel: background model, rectangle and posture detection
"""
