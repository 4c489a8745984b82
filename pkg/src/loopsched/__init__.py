"""Loop-nest performance modeling with autoencoder pre-training.

Pipeline: random loop-nest programs and transformation sequences are
featurized into fixed-length statement vectors; an autoencoder pre-trains a
statement encoder on unlabeled vectors; an AST-structured LSTM model predicts
speedups (labeled by an analytic cost oracle); a beam-search autoscheduler
uses either the oracle or a trained model to pick transformation sequences.
"""

__version__ = "0.1.0"
