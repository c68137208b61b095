"""Trainable torch modules: tokenizer, geometry encoders, synthesizer."""
