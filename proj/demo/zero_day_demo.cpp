// Train CLAD on synthetic blobs with one class withheld, then see how the
// withheld class scores against the benign centroid.

#include <iostream>

#include "closr/closr.hpp"

int main() {
    closr::BlobParams bp;
    bp.n_per_class = 300;
    const auto data = closr::synth_blobs(bp);

    closr::RunConfig rc;
    rc.zero_day = data.zero_day_classes;
    rc.epochs = 30;
    rc.warmup_epochs = 3;
    rc.seed = 7;

    const auto prep = closr::prepare_training_data(data, rc);
    const auto ck = closr::fit_model(prep.train, rc, [](const closr::EpochLog& e) {
        if (e.epoch % 10 == 0) std::cout << "epoch " << e.epoch << " loss " << e.loss_mean << '\n';
    });
    const auto out = closr::evaluate(ck, prep.test, rc);
    for (const auto& c : out.report["per_class"])
        std::cout << c["class"].get<std::string>() << " (" << c["kind"].get<std::string>()
                  << ") auroc=" << c["auroc"] << " fpr@95=" << c["fpr_at_95"] << '\n';
}
