from datetime import datetime, timedelta, timezone

import pytest

from geo_stability.brands import BrandLexicon
from geo_stability.model import CampaignId, EngineId, PromptId, ResponseRecord

T0 = datetime(2026, 2, 2, 9, 0, tzinfo=timezone.utc)


def make_record(engine="chatgpt", campaign="Telekom", prompt=1, ts=T0, run=1, text="", citations=()):
    if not isinstance(ts, datetime):
        ts = T0 + timedelta(hours=ts)
    return ResponseRecord(
        EngineId.parse(engine), PromptId(CampaignId(campaign), prompt, f"prompt {prompt}"),
        ts, run, text, tuple(citations),
    )


@pytest.fixture
def rec():
    return make_record


@pytest.fixture
def telekom_lexicon():
    return BrandLexicon.from_entries("Telekom", [
        {"canonical": "Migros", "patterns": ["migros", "m-budget"]},
        {"canonical": "Salt", "patterns": ["salt"]},
        {"canonical": "Sunrise", "patterns": ["sunrise"]},
        {"canonical": "Swisscom", "patterns": ["swisscom"]},
    ])


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
