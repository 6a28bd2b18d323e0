"""duplexsim: reversible-network training engine plus an analytical model
of the systolic-array / hybrid eDRAM-SRAM accelerator that runs it."""

from duplexsim import bfp, memory, scheduling, systolic  # noqa: F401

__version__ = "0.1.0"
