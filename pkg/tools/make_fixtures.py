"""Regenerate the bundled fixtures under src/scenforge/data/.

The transcript entries are keyed by digests of the exact prompts the library
builds, so this script runs the real prompt builders and then replays the
whole pipeline through ReplayClient to produce the golden outputs.  Run it
from the repository root after changing prompt wording:

    python3 tools/make_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from scenforge.ips import parse_ips, serialize_ips
from scenforge.dsl import serialize_template
from scenforge.llm import (
    ReplayClient,
    Transcript,
    build_conversion_prompt,
    build_extraction_prompt,
    convert_to_template,
    extract_ips,
    prompt_digest,
)
from scenforge.logicalize import fill_ranges, select_ego, substitute_ego

DATA = Path(__file__).resolve().parent.parent / "src" / "scenforge" / "data"
STAMP = "2026-01-05T00:00:00+00:00"

THREE_VEHICLE_REPORT = """\
On a straight three-lane highway, vehicle V1 was traveling in the rightmost
lane, vehicle V2 was driving in the middle lane, and vehicle V3 was cruising
in the leftmost lane.  V1 suddenly swerved left into the middle lane just
ahead of V2, forcing V2 to brake hard.  Moments later V2 swerved left into
the leftmost lane to escape, and V3 had to slow down sharply to avoid
hitting it.
"""

THREE_VEHICLE_IPS = """\
road: straight, lanes: 3
V1: V1 is traveling in the rightmost lane.
V2: V2 is driving in the middle lane.
V3: V3 is cruising in the leftmost lane.
(V1, V2): V1 swerves left ahead of V2, and V2 brakes hard.
(V2, V3): V2 swerves left into the adjacent lane, and V3 decelerates.
"""

THREE_VEHICLE_TEMPLATE = """\
road: straight, lanes: 3
npc(V1, lane=[1,1], offset=[20,60], speed=[8,18])
npc(V2, lane=[2,2], offset=[0,80], speed=[8,18])
npc(V3, lane=[3,3], offset=[0,40], speed=[10,14])
lane_change(V1, lane=[2,2], speed=[8,16], trigger=[1,2])
decelerate(V2, speed=[2,8], trigger=[1,2])
lane_change(V2, lane=[3,3], speed=[6,12], trigger=[2,3])
decelerate(V3, speed=[0,6], trigger=[2,3])
"""

REAR_END_REPORT = """\
On a curved section of a four-lane road, vehicle V1 was traveling in the
second lane with vehicle V2 following in the same lane.  A queue had formed
ahead, so V1 braked hard.  V2 slowed down as well but could not stop in
time.
"""

REAR_END_IPS = """\
road: curved, lanes: 4
V1: V1 is traveling in the second lane.
V2: V2 is following in the second lane.
(V1, V2): V1 brakes hard, and V2 decelerates.
"""

REAR_END_TEMPLATE = """\
road: curved, lanes: 4
npc(V1, lane=[2,2], offset=[20,80], speed=[4,16])
npc(V2, lane=[2,2], offset=[0,5], speed=[10,18])
decelerate(V1, speed=[0,12], trigger=[1,1])
decelerate(V2, speed=[0,10], trigger=[1,3])
"""

CUT_IN_LSC = """\
road: straight, lanes: 3
ego: V2
npc(V1, lane=[1,3], offset=[5,80], speed=[0,20])
npc(V2, lane=[2,2], offset=[0,0], speed=[10,10])
lane_change(V1, lane=[2,2], speed=[0,25], trigger=[1,1])
"""

CAMPAIGN_CONFIG = {
    "seed": 11,
    "repetitions": 3,
    "methods": ["genetic", "random"],
    "scenarios": [
        "../scenarios/cut_in.lsc",
        "../scenarios/rear_end.lsc",
        "../scenarios/double_lane_change.lsc",
    ],
    "out_dir": "campaign_out",
    "search": {"generations": 6},
}


def entry(response: str) -> dict:
    return {"response": response, "model": "scripted", "timestamp": STAMP}


def run_pipeline(report: str, client: ReplayClient):
    """The same extract -> convert -> fill -> ego chain the CLI runs."""
    extraction = extract_ips(report, client)
    conversion = convert_to_template(extraction.ips, client)
    scenario = fill_ranges(conversion.template, conversion.proposed_ranges(),
                           road=extraction.ips.road)
    ego = select_ego(extraction.ips).ego
    return extraction.ips, substitute_ego(scenario, ego)


def main() -> None:
    for sub in ("reports", "transcripts", "golden", "scenarios", "configs"):
        (DATA / sub).mkdir(parents=True, exist_ok=True)

    (DATA / "reports" / "three_vehicle.txt").write_text(THREE_VEHICLE_REPORT)
    (DATA / "reports" / "rear_end.txt").write_text(REAR_END_REPORT)

    entries = {}
    for report, ips_text, template_text in (
        (THREE_VEHICLE_REPORT, THREE_VEHICLE_IPS, THREE_VEHICLE_TEMPLATE),
        (REAR_END_REPORT, REAR_END_IPS, REAR_END_TEMPLATE),
    ):
        entries[prompt_digest(build_extraction_prompt(report).render())] = entry(ips_text)
        ips = parse_ips(ips_text)
        entries[prompt_digest(build_conversion_prompt(ips).render())] = entry(template_text)
    transcript = Transcript(entries)
    transcript.save(DATA / "transcripts" / "pipeline.json")

    client = ReplayClient(transcript)
    ips3, scenario3 = run_pipeline(THREE_VEHICLE_REPORT, client)
    ips2, scenario2 = run_pipeline(REAR_END_REPORT, client)

    (DATA / "golden" / "three_vehicle.ips").write_text(serialize_ips(ips3))
    (DATA / "golden" / "three_vehicle.lsc").write_text(serialize_template(scenario3.template))

    (DATA / "scenarios" / "double_lane_change.lsc").write_text(
        serialize_template(scenario3.template))
    (DATA / "scenarios" / "rear_end.lsc").write_text(serialize_template(scenario2.template))
    (DATA / "scenarios" / "cut_in.lsc").write_text(CUT_IN_LSC)

    (DATA / "configs" / "quick_campaign.json").write_text(
        json.dumps(CAMPAIGN_CONFIG, indent=2) + "\n")

    for path in sorted(DATA.rglob("*")):
        if path.is_file():
            print(path.relative_to(DATA.parent))


if __name__ == "__main__":
    main()
