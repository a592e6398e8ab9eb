"""Column-parallel microphysics mini-app and accelerator offload cost model."""
