"""API v1 模块"""
