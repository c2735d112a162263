from repmult.experiments.analysis import (
    confabulation_report,
    correlation_report,
    hypothesis1,
    mean_svcca,
)
from repmult.experiments.runs import DataBundle, EnsembleRun, run_strategy, strategies_for, sweep_regime
