"""Test suite for PDF to Long Screenshot Converter"""
