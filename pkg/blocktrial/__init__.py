'''
Randomization inference for multi-center clinical trials randomized in permuted blocks,
with tests conditional on the per-institution treatment counts.
'''

__version__ = "1.0.0"
