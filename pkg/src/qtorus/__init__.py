"""qtorus: torus quantization through hbar-deformed symplectic geometry,
with exact quantum oracles for every checkable claim."""

from .chart import (AAChart, ChartError, SeparableChart, build_chart,
                    chart_jets, dump_chart, load_chart, maslov_index,
                    product_chart)
from .estimator import TorusQuantizer
from .qgeom import (ActionCorrection, AngleCorrection, EnergyFunction,
                    KappaTable, action_correction, angle_correction,
                    energy_function, involution_residual, kappa0)
from .spectra import (ConvergenceReport, FHbar, QuantizationConfig,
                      SpectrumTable, build_pipeline, compare,
                      convergence_study, quantize)

__version__ = "0.1.0"

__all__ = [
    "AAChart", "ActionCorrection", "AngleCorrection", "ChartError",
    "ConvergenceReport", "EnergyFunction", "FHbar", "KappaTable",
    "QuantizationConfig", "SeparableChart", "SpectrumTable", "TorusQuantizer",
    "action_correction", "angle_correction", "build_chart", "build_pipeline",
    "chart_jets", "compare", "convergence_study", "dump_chart",
    "energy_function", "involution_residual", "kappa0", "load_chart",
    "maslov_index", "product_chart", "quantize",
]
