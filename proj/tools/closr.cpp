// closr command line: train | eval | sweep | export-embeddings | synth

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "closr/closr.hpp"

namespace {

std::string flag_name(std::string key) {
    for (auto& ch : key)
        if (ch == '_') ch = '-';
    return "--" + key;
}

struct Command {
    explicit Command(CLI::App* a) : app(a) {}
    CLI::App* app;
    std::string config_file;
    std::map<std::string, std::string> values;
};

void add_keys(Command& cmd) {
    cmd.app->add_option("--config", cmd.config_file, "key = value config file, overridden by flags");
    for (const auto& k : closr::detail::config_keys())
        cmd.app->add_option(flag_name(k.name), cmd.values[k.name], k.help);
}

closr::RunConfig resolve(const Command& cmd) {
    closr::RunConfig rc;
    if (!cmd.config_file.empty()) closr::apply_config_file(rc, cmd.config_file);
    for (const auto& k : closr::detail::config_keys())
        if (cmd.app->count(flag_name(k.name)) > 0) closr::set_config_value(rc, k.name, cmd.values.at(k.name));
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive anomaly detection and open-set recognition for network flows"};
    app.require_subcommand(1);
    Command train{app.add_subcommand("train", "fit a model and write a checkpoint")};
    Command eval{app.add_subcommand("eval", "score a CSV with a checkpoint and write a report")};
    Command sweep{app.add_subcommand("sweep", "train and validate over a range of margin or alpha")};
    Command exp{app.add_subcommand("export-embeddings", "write per-head embeddings and centroid distances")};
    Command synth{app.add_subcommand("synth", "generate a Gaussian-blob dataset")};
    for (Command* c : {&train, &eval, &sweep, &exp, &synth}) add_keys(*c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train.app->parsed()) {
            const auto rc = resolve(train);
            const auto ck = closr::cmd_train(rc);
            std::cerr << "wrote " << rc.out << " (" << ck.params.parameter_count() << " parameters, "
                      << ck.class_names.size() << " classes)\n";
        } else if (eval.app->parsed()) {
            const auto rc = resolve(eval);
            const auto out = closr::cmd_eval(rc);
            std::cerr << "scoring wall-clock: " << out.wall_ms << " ms\n";
            std::cout << out.report.dump(2) << '\n';
        } else if (sweep.app->parsed()) {
            const auto rc = resolve(sweep);
            const auto text = closr::cmd_sweep(rc);
            if (rc.out.empty()) std::cout << text;
        } else if (exp.app->parsed()) {
            const auto rc = resolve(exp);
            const auto text = closr::cmd_export_embeddings(rc);
            if (rc.out.empty()) std::cout << text;
        } else if (synth.app->parsed()) {
            const auto rc = resolve(synth);
            const auto d = closr::cmd_synth(rc);
            std::cerr << "wrote " << rc.out << " (" << d.size() << " rows)\n";
        }
    } catch (const closr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const closr::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const closr::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
