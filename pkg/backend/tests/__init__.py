"""
cranmarket 测试套件
"""
