"""CLI commands and the acceptance suite"""
