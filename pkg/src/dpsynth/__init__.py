"""dpsynth: differentially private tabular data synthesis and benchmarking.

Provides the MWEM synthesizer, DP classifiers (Gaussian naive Bayes and
logistic regression via output perturbation), the QUAIL ensemble, evaluation
metrics (pMSE ratio, SRA, F1, AUC-ROC), and a TSTR/TRTR benchmark harness
with a CLI front end.
"""

__version__ = "0.1.0"
