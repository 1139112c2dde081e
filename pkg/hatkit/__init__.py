"""hatkit: RNN-T / HAT transducer losses, MWER training and fusion decoding at desk scale."""

__version__ = "0.1.0"
