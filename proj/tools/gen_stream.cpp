// Writes a synthetic implicit-feedback ratings file (MovieLens "::" layout)
// for demos and smoke runs.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "streamrec/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic ratings stream generator"};
    streamrec::SynthConfig cfg;
    std::string out_path;
    app.add_option("--out", out_path, "ratings file to write")->required();
    app.add_option("--users", cfg.num_users, "user count");
    app.add_option("--items", cfg.num_items, "item count");
    app.add_option("--interactions", cfg.num_interactions, "stream length");
    app.add_option("--drift", cfg.drift, "taste migration strength in [0,1]");
    app.add_option("--seed", cfg.seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    try {
        auto records = streamrec::generate_synthetic_ratings(cfg);
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
        for (const auto& r : records)
            out << r.user << "::" << r.item << "::5::" << r.timestamp << "\n";
        std::cout << "wrote " << records.size() << " interactions to " << out_path << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
