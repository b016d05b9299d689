#pragma once

#include <string>
#include <vector>

#include "srot/flows.hpp"
#include "srot/labelprop.hpp"
#include "srot/measures.hpp"
#include "srot/solvers.hpp"

namespace srot {

// Transport plan over the 2D dataset: scatter of both sides (truth outliers
// get distinct markers) plus one segment per coupling entry, opacity
// normalized by the largest plan value. Above `segment_budget` entries,
// segments below 1% opacity are culled and the legend says so.
void plot_plan_svg(const ContaminatedDataset& ds, const TransportPlan& plan, const std::string& path,
                   long segment_budget = 100000);

// Loss and eval curves of one or more flow traces.
void plot_traces_svg(const std::vector<FlowTrace>& traces, const std::string& path);

// Accuracy against transported mass, one polyline per method.
void plot_labelprop_svg(const LabelPropReport& report, const std::string& path);

}  // namespace srot
