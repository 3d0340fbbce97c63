import warnings

import pytest

from eegattn.features import FeatureMatrix, FeatureParams, featurize_corpus
from eegattn.formation import FormationParams, form_corpus
from eegattn.ingest import SynthSpec, generate_synthetic


@pytest.fixture(scope="session")
def small_recordings():
    """Three subjects, three 22-min trials each; quick to featurize."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = SynthSpec(num_subjects=3, trials_per_subject=3, trial_duration_min=22, subject_variability=0.5, seed=7)
        return generate_synthetic(spec)


@pytest.fixture(scope="session")
def small_features(small_recordings) -> FeatureMatrix:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        formed = form_corpus(small_recordings, FormationParams(drop_first_trials=0))
    return featurize_corpus(formed, FeatureParams())


# ----------------------------------------------------------------------------
# Acceptance summary: one PASS/FAIL line per criterion at the end of the run
# ----------------------------------------------------------------------------

_CRITERIA: dict[int, list] = {}
CRITERION_NOTES: dict[int, list[str]] = {}


def _criterion_of(nodeid: str):
    name = nodeid.split("::")[-1]
    if "test_acceptance" in nodeid and name.startswith("test_criterion_"):
        return int(name.split("_")[2])
    return None


def pytest_runtest_logreport(report):
    n = _criterion_of(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA.setdefault(n, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcomes = _CRITERIA[n]
        if all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS" if all(o in ("passed", "skipped") for o in outcomes) else "FAIL"
        notes = "; ".join(CRITERION_NOTES.get(n, []))
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}" + (f"  ({notes})" if notes else ""))
