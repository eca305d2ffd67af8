"""Remote patient monitoring triage workbench.

Core pieces: the shared vitals vocabulary (:mod:`rpm_triage.core`), two
rule-based triage baselines (:mod:`rpm_triage.fixed_rules`,
:mod:`rpm_triage.adaptive_rules`), agreement and accuracy statistics
(:mod:`rpm_triage.agreement`), a seeded cohort simulator
(:mod:`rpm_triage.cohort`), the pluggable rater port
(:mod:`rpm_triage.raters`), the study harness
(:mod:`rpm_triage.assignment`, :mod:`rpm_triage.studies`,
:mod:`rpm_triage.report`), and the blinded review service
(:mod:`rpm_triage.service`).
"""

__version__ = "0.1.0"
