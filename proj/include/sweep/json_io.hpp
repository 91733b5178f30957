#pragma once

#include "sweep/certificate.hpp"
#include "sweep/csvio.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace sweep {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Multiplier file: lambda, the BV adjoint (values + atoms) and the measure.
// ---------------------------------------------------------------------------

inline json multipliers_to_json(const Candidate& cand) {
  json j;
  j["lambda"] = cand.lambda;
  json p;
  p["grid"] = cand.p.grid;
  json vals = json::array();
  for (const auto& v : cand.p.values) vals.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  p["values"] = vals;
  json atoms = json::array();
  for (const auto& [t, jmp] : cand.p.atoms)
    atoms.push_back({{"t", t}, {"jump", std::vector<double>(jmp.data(), jmp.data() + jmp.size())}});
  p["atoms"] = atoms;
  j["p"] = p;
  json nu;
  nu["density"] = cand.nu.density;
  json natoms = json::array();
  for (const auto& [t, m] : cand.nu.atoms) natoms.push_back({{"t", t}, {"mass", m}});
  nu["atoms"] = natoms;
  j["nu"] = nu;
  return j;
}

inline void multipliers_from_json(const json& j, Candidate& cand) {
  try {
    cand.lambda = j.at("lambda").get<double>();
    const auto& p = j.at("p");
    cand.p.grid = p.at("grid").get<std::vector<double>>();
    cand.p.values.clear();
    for (const auto& row : p.at("values")) {
      const auto v = row.get<std::vector<double>>();
      cand.p.values.push_back(Eigen::Map<const Vec>(v.data(), static_cast<long>(v.size())));
    }
    cand.p.atoms.clear();
    for (const auto& a : p.value("atoms", json::array())) {
      const auto v = a.at("jump").get<std::vector<double>>();
      cand.p.atoms.emplace_back(a.at("t").get<double>(),
                                Eigen::Map<const Vec>(v.data(), static_cast<long>(v.size())));
    }
    cand.nu.grid = cand.p.grid;
    if (j.contains("nu")) {
      cand.nu.density = j["nu"].value("density", std::vector<double>(cand.p.grid.size(), 0.0));
      cand.nu.atoms.clear();
      for (const auto& a : j["nu"].value("atoms", json::array()))
        cand.nu.atoms.emplace_back(a.at("t").get<double>(), a.at("mass").get<double>());
    } else {
      cand.nu = SignedMeasure::zero(cand.p.grid);  // missing measure defaults to zero
    }
    if (cand.nu.density.size() != cand.p.grid.size())
      throw ParseError("multiplier file: nu density length mismatch");
    if (cand.p.values.size() != cand.p.grid.size())
      throw ParseError("multiplier file: p values length mismatch");
  } catch (const json::exception& e) {
    throw ParseError(std::string("multiplier file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Certificate report. Key names are pinned by schema/certificate.schema.json.
// ---------------------------------------------------------------------------

inline json certificate_to_json(const CertificateReport& rep) {
  auto check = [](const CheckResult& c) {
    return json{{"residual", c.residual}, {"tolerance", c.tolerance}, {"pass", c.pass}};
  };
  json j;
  j["checks"] = {{"nontriviality", check(rep.nontriviality)},
                 {"admissibility", check(rep.admissibility)},
                 {"adjoint", check(rep.adjoint)},
                 {"slackness_a", check(rep.slackness_a)},
                 {"slackness_b", check(rep.slackness_b)},
                 {"transversality", check(rep.transversality)},
                 {"weak_max", check(rep.weak_max)},
                 {"support", check(rep.support)}};
  j["lambda"] = rep.lambda;
  j["p_terminal"] =
      std::vector<double>(rep.p_terminal.data(), rep.p_terminal.data() + rep.p_terminal.size());
  json atoms = json::array();
  for (const auto& [t, m] : rep.nu_atoms) atoms.push_back({{"t", t}, {"mass", m}});
  j["nu_atoms"] = atoms;
  j["overall_pass"] = rep.overall_pass();
  return j;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace sweep
