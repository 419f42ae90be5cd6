// Minimal end-to-end walkthrough: synthesize a small cohort, train an
// early-fusion forecaster, and print next-day step predictions for the
// held-out users.
#include <iostream>

#include "stepcast/stepcast.hpp"

int main() {
    using namespace stepcast;

    synth::CohortSpec spec;
    spec.n_users = 12;
    spec.n_days = 70;
    spec.seed = 7;
    spec.coupling_beta = 0.5;
    synth::DailyCohort cohort = synth::generate_daily_cohort(spec);
    std::cout << "cohort: " << cohort.users.size() << " users after filtering\n";

    ExperimentContext ctx;
    ctx.users = cohort.users;
    ctx.master_seed = 7;
    ctx.base.hidden = 16;
    ctx.base.max_epochs = 12;
    ctx.base.patience = 4;
    ctx.base.batch_size = 64;

    std::vector<std::string> all_users = select_engaged_cohort(ctx.users, 0);
    const CellResult& cell =
        detail::eval_cell(ctx, "all", all_users, Architecture::lstm_early, 7, Head::regression, 0.0, "steps");
    if (!cell.ok) {
        std::cerr << "training failed: " << cell.error << "\n";
        return 1;
    }
    std::cout << "early fusion, w=7: test MAE " << fmt_fixed(cell.test_mae, 1) << " steps over " << cell.m
              << " examples\n";
    for (const auto& pu : cell.per_user)
        std::cout << "  " << pu.user_id << ": " << pu.m << " days, MAE " << fmt_fixed(pu.mae, 1) << "\n";

    std::string ckpt = save_checkpoint(*cell.model);
    TrainedForecaster reloaded = load_checkpoint(ckpt);
    std::cout << "checkpoint round-trip ok (" << ckpt.size() << " bytes)\n";
    return 0;
}
