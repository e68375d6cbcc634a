// Minimal end-to-end walk: synthesize a malicious session, render it the way
// a detector sees it, and classify it with the rule backend.

#include <iostream>

#include "netwarden/netwarden.hpp"

int main() {
  using namespace netwarden;

  const TechniqueCatalog catalog = TechniqueCatalog::builtin_default();

  const EventTrace attack = synth_technique("Network_Device_Configuration_Dump", /*seed=*/7,
                                            /*intensity=*/12);
  std::cout << "── trace (" << attack.events.size() << " events) ──\n";
  std::cout << serialize_trace(attack, TimeZoneOffset{}, 2000) << "\n\n";

  const RuleDetector detector;
  const Verdict offline = detector.detect(attack, catalog);
  std::cout << "offline verdict: " << offline.label << "\n";

  StreamConfig cfg;
  cfg.delta = 10;
  cfg.window = 40;
  StreamSession session("quickstart", cfg, std::make_shared<RuleDetector>(), catalog);
  for (const auto& e : attack.events) session.push_event(e);
  const SessionReport report = session.finalize();
  std::cout << "streaming: " << report.window_verdicts.size() << " windows, "
            << report.alerts_raised.size() << " alert(s), aggregate "
            << report.aggregate.label << "\n";
  return 0;
}
