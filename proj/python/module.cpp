/*
 * Copyright (C) 2026 The remotelab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
*/

#include <rlab/audit.hpp>
#include <rlab/error.hpp>
#include <rlab/lab.hpp>
#include <rlab/overlay.hpp>
#include <rlab/provisioner.hpp>
#include <rlab/scenario.hpp>
#include <rlab/state.hpp>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace rlab;

namespace {

py::object to_py(const Json& j)
{
  return py::module_::import("json").attr("loads")(j.dump());
}

template <typename T>
py::object to_py_value(const T& value)
{
  return to_py(Json(value));
}

Json cost_json(const CostReport& report)
{
  Json nodes = Json::array();
  for (const auto& line : report.nodes)
  {
    nodes.push_back({{"node_id", line.node_id}, {"billed_minutes", line.billed_minutes},
      {"rate_cents_per_hour", line.rate_cents_per_hour}, {"amount_cents", line.amount_cents}});
  }
  return {{"from", report.from}, {"to", report.to}, {"total_cents", report.total_cents},
    {"nodes", nodes}};
}

/// Lab with an in-memory or file-backed log, driven by explicit clock values.
class PyLab
{
public:
  explicit PyLab(const std::string& config_text)
  : _lab(std::make_unique<Lab>(LabConfig::parse(config_text)))
  {
  }

  Seconds now() const { return _lab->now(); }
  void advance_to(Seconds t) { _lab->advance_to(t); }

  py::object add_student(const std::string& name, int tier, std::optional<std::int64_t> quota)
  {
    const auto out = _lab->add_student(name, static_cast<Tier>(tier), quota);
    return to_py({{"student", out.student}, {"token", out.token}});
  }

  py::object add_robot(const std::string& name, const std::string& capabilities,
    std::int64_t firmware_mb, double wheel_bias)
  {
    RobotSpec spec;
    spec.name = name;
    spec.capabilities = CapabilitySet::parse(capabilities);
    spec.firmware_size_mb = firmware_mb;
    spec.wheel_bias = wheel_bias;
    return to_py_value(_lab->add_robot(spec));
  }

  py::object add_field(const std::string& name, std::vector<std::string> cells, double cell_m)
  {
    return to_py_value(_lab->add_field(name, std::move(cells), cell_m));
  }

  py::object reserve(const std::string& student_id, std::vector<std::string> robot_ids,
    Seconds start, int minutes, const std::string& field_id)
  {
    return to_py_value(_lab->scheduler().request_reservation(student_id, std::move(robot_ids),
      TimeSlot{start, minutes}, field_id, _lab->now(), Actor::student(student_id)));
  }

  py::object cancel(const std::string& reservation_id, const std::string& student_id)
  {
    return to_py_value(_lab->scheduler().cancel_reservation(reservation_id,
      Actor::student(student_id), _lab->now()));
  }

  py::object provision_workspace(const std::string& student_id, bool gpu)
  {
    return to_py_value(_lab->provisioner().provision_workspace(student_id, gpu, _lab->now()));
  }

  py::object deprovision_workspace(const std::string& workspace_id)
  {
    return to_py_value(_lab->provisioner().deprovision_workspace(workspace_id, _lab->now()));
  }

  py::object drive(const std::string& reservation_id, const std::string& robot_id, double v,
    double omega, std::int32_t ticks)
  {
    const auto s = _lab->store().snapshot();
    const auto it = s->reservations.find(reservation_id);
    if (it == s->reservations.end())
      throw Error(Errc::UnknownReservation, "no reservation '" + reservation_id + "'");
    auto& control = _lab->control();
    control.dispatch(reservation_id, robot_id, DriveCommand{v, omega, ticks}, _lab->now(),
      Actor::student(it->second.student_id));
    return to_py_value(control.run_until_idle(robot_id, _lab->now()));
  }

  py::object inject_fault(const std::string& robot_id, const std::string& kind)
  {
    return to_py_value(_lab->control().inject_fault(robot_id, fault_kind_from_string(kind),
      _lab->now()));
  }

  py::object cost_report(Seconds from, Seconds to) const
  {
    return to_py(cost_json(_lab->provisioner().cost_report(from, to, _lab->now())));
  }

  std::string route_table() const { return format_route_table(_lab->overlay().route_table()); }
  py::object state() const { return to_py_value(*_lab->store().snapshot()); }
  py::object events() const { return to_py_value(_lab->store().events()); }

  py::dict audit() const
  {
    const auto log = _lab->store().events();
    const auto live = _lab->store().snapshot();
    py::dict out;
    out["double_booking"] = audit_double_booking(*live);
    out["activation_order"] = audit_activation_order(log);
    out["command_ownership"] = audit_command_ownership(log);
    out["capacity"] = audit_capacity(log);
    out["replay"] = audit_replay(log, *live);
    out["invariants"] = validate_all(*live);
    return out;
  }

private:
  std::unique_ptr<Lab> _lab;
};

py::object run_scenario_text(const std::string& text)
{
  const auto scenario = parse_scenario(text);
  Lab lab(scenario_config(scenario), std::make_unique<Store>());
  return to_py(ScenarioRunner(scenario, lab).run().to_json());
}

} // anonymous namespace

PYBIND11_MODULE(remotelab, m)
{
  m.doc() = "Remote robotics lab: scheduler, provisioner, overlay and fleet simulator";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try
    {
      if (p)
        std::rethrow_exception(p);
    }
    catch (const Error& e)
    {
      const auto args = py::make_tuple(std::string(to_string(e.code())), e.message(),
        to_py(e.detail()));
      PyErr_SetObject(error.ptr(), args.ptr());
    }
  });

  py::class_<PyLab>(m, "Lab")
    .def(py::init<const std::string&>(), py::arg("config") = "")
    .def_property_readonly("now", &PyLab::now)
    .def("advance_to", &PyLab::advance_to, py::arg("t"))
    .def("add_student", &PyLab::add_student, py::arg("name"), py::arg("tier") = 3,
      py::arg("quota_min") = py::none())
    .def("add_robot", &PyLab::add_robot, py::arg("name"),
      py::arg("capabilities") = "diff_drive,lidar", py::arg("firmware_mb") = 0,
      py::arg("wheel_bias") = 0.0)
    .def("add_field", &PyLab::add_field, py::arg("name"), py::arg("cells"),
      py::arg("cell_m") = 0.5)
    .def("reserve", &PyLab::reserve, py::arg("student_id"), py::arg("robot_ids"),
      py::arg("start"), py::arg("minutes"), py::arg("field_id"))
    .def("cancel", &PyLab::cancel, py::arg("reservation_id"), py::arg("student_id"))
    .def("provision_workspace", &PyLab::provision_workspace, py::arg("student_id"),
      py::arg("gpu") = false)
    .def("deprovision_workspace", &PyLab::deprovision_workspace, py::arg("workspace_id"))
    .def("drive", &PyLab::drive, py::arg("reservation_id"), py::arg("robot_id"), py::arg("v"),
      py::arg("omega"), py::arg("ticks"))
    .def("inject_fault", &PyLab::inject_fault, py::arg("robot_id"), py::arg("kind"))
    .def("cost_report", &PyLab::cost_report, py::arg("from_"), py::arg("to"))
    .def("route_table", &PyLab::route_table)
    .def("state", &PyLab::state)
    .def("events", &PyLab::events)
    .def("audit", &PyLab::audit);

  m.def("run_scenario", &run_scenario_text, py::arg("text"),
    "Runs a scenario script against a fresh in-memory lab and returns its report.");
  m.def("parse_timestamp", &parse_timestamp, py::arg("text"));
  m.def("format_address", &format_address, py::arg("addr"));
  m.def("parse_address", &parse_address, py::arg("dotted"));
  m.attr("DEFAULT_START") = DefaultScenarioStart;
}
