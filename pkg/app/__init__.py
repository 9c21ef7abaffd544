"""Contlex classifier: multi-task POS and inflection-class prediction."""
