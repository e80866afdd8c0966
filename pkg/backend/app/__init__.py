"""cranmarket 后端应用"""
