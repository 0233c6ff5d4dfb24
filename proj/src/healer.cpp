#include "lakekernel/healer.hpp"

#include "lakekernel/error.hpp"

#include "fsutil.hpp"

#include <algorithm>

namespace lake {

namespace fs = std::filesystem;

FailureContext failure_context(const RunReport& report) {
    if (report.outcome != RunOutcome::FailedOpen) {
        throw Error(ErrorCode::InvalidState, "run " + report.run_id + " is " + std::string(to_string(report.outcome)) +
                                                 ", not FailedOpen");
    }
    FailureContext ctx{report, {}, report.reason, report.temp_branch, report.base_commit};
    for (const auto& n : report.node_results) {
        if (n.status == NodeStatus::Failed) {
            ctx.failed_node = n.node;
            ctx.error = n.error;
            break;
        }
    }
    return ctx;
}

RunReport AgentHandle::run(const PipelineSpec& spec, const std::string& target) {
    RunOptions o;
    o.principal = principal_;
    o.merge = false;
    return lake_.run(spec, target, o);
}

namespace {

class Baseline : public RepairAgent {
public:
    explicit Baseline(std::vector<PipelineSpec> patches) : patches_(std::move(patches)) {}

    std::optional<PipelineSpec> propose(const FailureContext&, const PipelineSpec&, const std::vector<Attempt>& history,
                                        AgentHandle&) override {
        if (history.size() >= patches_.size()) return std::nullopt;
        return patches_[history.size()];
    }

private:
    std::vector<PipelineSpec> patches_;
};

} // namespace

std::unique_ptr<RepairAgent> baseline_agent(std::vector<PipelineSpec> patches) {
    return std::make_unique<Baseline>(std::move(patches));
}

std::vector<PipelineSpec> load_patches(const fs::path& dir) {
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pipe") files.push_back(entry.path());
    }
    if (ec) throw Error(ErrorCode::NotFound, "cannot list patches in " + dir.string() + ": " + ec.message());
    std::sort(files.begin(), files.end());
    std::vector<PipelineSpec> out;
    for (const auto& f : files) {
        auto text = detail::read_file(f);
        if (!text) throw Error(ErrorCode::StorageFailure, "cannot read " + f.string());
        try {
            out.push_back(parse_pipeline(*text));
        } catch (const ParseError& e) {
            throw Error(ErrorCode::ParseError, f.filename().string() + ": " + e.what());
        }
    }
    return out;
}

HealResult heal(Lakehouse& lake, const std::string& run_id, RepairAgent& agent, const std::string& agent_principal,
                int budget) {
    FailureContext ctx = failure_context(lake.get_run(run_id));
    const std::string& target = ctx.report.target_branch;
    if (authorize(*lake.governance().policy(), agent_principal, Action::merge_into(target))) {
        throw Error(ErrorCode::InvalidArgument,
                    "repair agent '" + agent_principal + "' holds MergeInto(" + target + "); use a confined principal");
    }
    const PipelineSpec original = parse_pipeline(ctx.report.pipeline_text);
    AgentHandle api(lake, agent_principal);
    std::vector<Attempt> history;
    for (int n = 1; n <= budget; ++n) {
        std::optional<PipelineSpec> patch = agent.propose(ctx, original, history, api);
        if (!patch) return GaveUp{history, "agent gave up after " + std::to_string(history.size()) + " attempt(s)"};
        RunReport r = api.run(*patch, target);
        history.push_back({n, r.run_id, r.outcome, r.reason, r.temp_branch});
        if (r.outcome == RunOutcome::AwaitingReview) {
            Proposal p;
            p.branch = r.temp_branch;
            p.verdicts = r.verdicts;
            p.attempts = n;
            p.diff = lake.catalog().diff(target, r.final_head.hex);
            p.report = std::move(r);
            p.history = history;
            return p;
        }
    }
    return GaveUp{history, "budget of " + std::to_string(budget) + " attempt(s) exhausted"};
}

MergeResult approve(Lakehouse& lake, const std::string& proposal_branch, const std::string& principal) {
    auto report = lake.runs().find_by_temp_branch(proposal_branch);
    if (!report) throw Error(ErrorCode::UnknownRun, "no run produced branch '" + proposal_branch + "'");
    if (report->outcome != RunOutcome::AwaitingReview) {
        throw Error(ErrorCode::InvalidState, "run " + report->run_id + " is " + std::string(to_string(report->outcome)) +
                                                 ", not a proposal awaiting review");
    }
    for (const auto& v : report->verdicts) {
        if (v.evaluated_at != report->final_head) {
            throw Error(ErrorCode::StaleProposal, "verdict of '" + v.verifier + "' is bound to another commit");
        }
    }
    return lake.merge(proposal_branch, report->target_branch, principal, report->final_head);
}

} // namespace lake
