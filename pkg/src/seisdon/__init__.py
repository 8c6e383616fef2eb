"""seisdon: a workbench that learns building seismic response operators
(ground excitation -> floor displacement histories) with multiscale
DeepONets, including the simulation, resampling and augmentation pipeline."""

__version__ = "0.1.0"
