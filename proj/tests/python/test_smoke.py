#
# Copyright (C) 2026 The remotelab Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#

import os
import pathlib

import pytest

import remotelab as rl

SCENARIOS = pathlib.Path(os.environ.get("RLAB_SOURCE_DIR", pathlib.Path(__file__).parents[2])) / "scenarios"
MONDAY = rl.DEFAULT_START
CONFIG = "[auth]\ntoken_secret = py\n"


@pytest.fixture
def lab():
    lab = rl.Lab(CONFIG)
    lab.advance_to(MONDAY + 8 * 3600)
    return lab


def arena(lab):
    return lab.add_field("arena", ["." * 10] * 10, 0.5)["id"]


def test_reservation_conflict_maps_to_error(lab):
    field = arena(lab)
    alice = lab.add_student("alice")["student"]["id"]
    bob = lab.add_student("bob")["student"]["id"]
    tb1 = lab.add_robot("tb1")["id"]
    r = lab.reserve(alice, [tb1], MONDAY + 9 * 3600, 30, field)
    assert r["state"] == "Confirmed"
    with pytest.raises(rl.Error) as err:
        lab.reserve(bob, [tb1], MONDAY + 9 * 3600 + 900, 30, field)
    code, message, detail = err.value.args
    assert code == "Conflict"
    assert detail["robot_id"] == tb1
    assert lab.cancel(r["id"], alice)["state"] == "Cancelled"


def test_session_drives_robot_and_audits_clean(lab):
    field = arena(lab)
    alice = lab.add_student("alice")["student"]["id"]
    tb1 = lab.add_robot("tb1", firmware_mb=400)["id"]
    r = lab.reserve(alice, [tb1], MONDAY + 9 * 3600, 60, field)
    lab.advance_to(MONDAY + 9 * 3600 + 300)
    assert lab.state()["reservations"][r["id"]]["state"] == "Active"
    tel = lab.drive(r["id"], tb1, 0.5, 0.0, 10)
    assert len(tel) == 10
    assert tel[-1]["pose"]["x"] == pytest.approx(tel[0]["pose"]["x"] + 0.45)
    assert all(not v for v in lab.audit().values())


def test_workspace_cost_and_routes(lab):
    alice = lab.add_student("alice", tier=1)["student"]["id"]
    ws = lab.provision_workspace(alice)
    lab.advance_to(lab.now + 3600)
    assert lab.state()["workspaces"][ws["id"]]["state"] == "Ready"
    assert "10.80.0.1" in lab.route_table()
    assert lab.cost_report(MONDAY, lab.now)["total_cents"] > 0
    assert lab.deprovision_workspace(ws["id"])["state"] in ("Stopping", "Released")


def test_addresses_and_timestamps():
    assert rl.format_address(rl.parse_address("10.80.0.7")) == "10.80.0.7"
    assert rl.parse_timestamp("2026-09-07T00:00:00Z") == MONDAY
    assert rl.parse_timestamp("not a time") is None


def test_class13_scenario_passes():
    report = rl.run_scenario((SCENARIOS / "class13.scn").read_text())
    assert report["passed"], [c for c in report["checks"] if not c["passed"]]
    assert report["invariant_violations"] == []
