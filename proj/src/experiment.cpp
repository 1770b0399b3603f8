#include "camelion/experiment.hpp"

#include <algorithm>
#include <fstream>

#include "camelion/error.hpp"
#include "camelion/mvf.hpp"

namespace camelion {

Cohort make_cohort(const RunConfig& cfg) {
  cfg.validate();
  Cohort c;
  for (int i = 0; i < cfg.n_atlas + cfg.n_test; ++i) {
    PhantomSubject s = make_subject(cfg.phantom, i, cfg.protocol_a, cfg.protocol_b);
    if (i < cfg.n_atlas) {
      AtlasPair a;
      a.image = std::move(s.image_a);
      a.labels = std::move(s.labels);
      c.atlases.push_back(std::move(a));
    } else {
      char name[32];
      std::snprintf(name, sizeof name, "test_%03d", i - cfg.n_atlas);
      c.tests.push_back({name, std::move(s.image_a), std::move(s.image_b), std::move(s.labels)});
    }
  }
  c.atlases = precompute_atlas_pv(std::move(c.atlases), cfg.loop.pv);
  return c;
}

Cohort load_cohort(const Manifest& manifest, const RunConfig& cfg) {
  Cohort c;
  for (const auto* e : manifest.with_role(SubjectRole::Atlas)) {
    AtlasPair a;
    a.image = read_scalar_mvf(manifest.resolve(e->image_a));
    a.labels = read_label_mvf(manifest.resolve(e->labels));
    c.atlases.push_back(std::move(a));
  }
  for (const auto* e : manifest.with_role(SubjectRole::Test))
    c.tests.push_back({e->id, read_scalar_mvf(manifest.resolve(e->image_a)), read_scalar_mvf(manifest.resolve(e->image_b)),
                       read_label_mvf(manifest.resolve(e->labels))});
  if (c.atlases.empty()) throw ArgumentError("manifest lists no atlas subjects");
  c.atlases = precompute_atlas_pv(std::move(c.atlases), cfg.loop.pv);
  return c;
}

ArmOutput run_arm(Method method, const ScalarVolume& input, const std::vector<AtlasPair>& atlases, const RunConfig& cfg,
                  const LabelVolume* truth) {
  switch (method) {
    case Method::Direct: return {run_direct(input, atlases, cfg.loop), std::nullopt};
    case Method::Nhm:
      return {run_nhm(input, atlases, cfg.nhm_reference_atlas, cfg.loop, cfg.nhm_percentiles), std::nullopt};
    case Method::Camelion: {
      LoopResult r = run(input, atlases, cfg.loop, truth);
      LabelVolume labels = r.final_labels();
      return {std::move(labels), std::move(r)};
    }
  }
  throw ArgumentError("unknown method");
}

LabelVolume reference_segmentation(const TestSubject& subject, const std::vector<AtlasPair>& atlases,
                                   const RunConfig& cfg) {
  return run_direct(subject.image_a, atlases, cfg.loop);
}

MethodReport make_report(const std::string& subject_id, Method method, const LabelVolume& labels,
                         const LabelVolume& truth, const LabelVolume& reference) {
  MethodReport r;
  r.subject_id = subject_id;
  r.method = method;
  for (int c = 1; c <= labels.num_classes; ++c) r.dice.push_back(dice(labels, truth, c));
  r.volume_mm3 = volumes(labels);
  r.reference_volume_mm3 = volumes(reference);
  return r;
}

std::vector<CorrelationRow> volume_correlations(const std::vector<MethodReport>& reports, const std::vector<int>& classes) {
  std::vector<CorrelationRow> rows;
  for (Method m : {Method::Direct, Method::Nhm, Method::Camelion}) {
    std::vector<const MethodReport*> group;
    for (const auto& r : reports)
      if (r.method == m) group.push_back(&r);
    if (group.size() < 3) continue;
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->subject_id < b->subject_id; });
    for (int c : classes) {
      std::vector<double> x, y;
      for (const auto* r : group) {
        x.push_back(r->volume_mm3[static_cast<std::size_t>(c - 1)]);
        y.push_back(r->reference_volume_mm3[static_cast<std::size_t>(c - 1)]);
      }
      try {
        rows.push_back({c, m, pearson(x, y), group.size()});
      } catch (const CorrelationError&) {
      }
    }
  }
  return rows;
}

ExperimentResult run_experiment(const Cohort& cohort, const RunConfig& cfg) {
  ExperimentResult out;
  for (const auto& t : cohort.tests) {
    const LabelVolume reference = reference_segmentation(t, cohort.atlases, cfg);
    for (Method m : {Method::Direct, Method::Nhm, Method::Camelion}) {
      ArmOutput arm = run_arm(m, t.image_b, cohort.atlases, cfg, &t.truth);
      out.reports.push_back(make_report(t.id, m, arm.labels, t.truth, reference));
      if (arm.loop) out.loops.push_back(std::move(*arm.loop));
    }
  }
  out.correlations = volume_correlations(out.reports, reported_classes(cfg.include_csf));
  return out;
}

std::filesystem::path arm_dir(const std::filesystem::path& runs, const std::string& subject, Method method) {
  return runs / subject / to_string(method);
}

void run_subject(const Manifest& manifest, const Cohort& cohort, const std::string& subject, Method method,
                 const RunConfig& cfg, const std::filesystem::path& runs) {
  const ManifestEntry& entry = manifest.find(subject);
  if (entry.role != SubjectRole::Test) throw ArgumentError("subject '" + subject + "' is an atlas, not a test subject");
  const auto it = std::find_if(cohort.tests.begin(), cohort.tests.end(), [&](const TestSubject& t) { return t.id == subject; });
  if (it == cohort.tests.end()) throw ArgumentError("subject '" + subject + "' is not loaded");
  const auto dir = arm_dir(runs, subject, method);
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(std::string("cannot create run directory: ") + e.what());
  }
  ArmOutput arm = run_arm(method, it->image_b, cohort.atlases, cfg, &it->truth);
  if (arm.loop) write_loop_artifacts(*arm.loop, reported_classes(cfg.include_csf), dir);
  write_mvf(arm.labels, dir / "labels.mvf");
}

EvalOutput evaluate_runs(const Cohort& cohort, const RunConfig& cfg,
                         const std::filesystem::path& runs, const std::filesystem::path& out) {
  EvalOutput result;
  for (const auto& t : cohort.tests) {
    std::vector<Method> present;
    for (Method m : {Method::Direct, Method::Nhm, Method::Camelion})
      if (std::filesystem::exists(arm_dir(runs, t.id, m) / "labels.mvf")) present.push_back(m);
    if (present.empty()) continue;
    ++result.subjects;
    const LabelVolume reference = reference_segmentation(t, cohort.atlases, cfg);
    for (Method m : present) {
      const LabelVolume labels = read_label_mvf(arm_dir(runs, t.id, m) / "labels.mvf");
      result.reports.push_back(make_report(t.id, m, labels, t.truth, reference));
    }
  }
  if (result.subjects == 0) throw ArgumentError("no completed runs found under " + runs.string());
  try {
    std::filesystem::create_directories(out);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(std::string("cannot create eval directory: ") + e.what());
  }
  const auto classes = reported_classes(cfg.include_csf);
  write_report(result.reports, classes, out / "dice.csv");
  if (result.subjects >= 3) {
    result.correlations = volume_correlations(result.reports, classes);
    write_correlations(result.correlations, out / "correlations.csv");
  }
  return result;
}

}  // namespace camelion
