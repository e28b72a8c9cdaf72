// salt: command-line front end for label-tree inspection, toy training,
// inference with probability dumps, evaluation reports, and throughput
// benchmarking.
//
// Exit codes: 0 success, 1 validation/data error, 2 usage error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "salt/activation.hpp"
#include "salt/checkpoint.hpp"
#include "salt/label_tree.hpp"
#include "salt/metrics.hpp"
#include "salt/saltvol.hpp"
#include "salt/train.hpp"

namespace {

using json = nlohmann::json;

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    os << text;
    if (!os)
        throw std::runtime_error("write failed for '" + path + "'");
}

salt::LabelTree load_tree(const std::string& path) {
    if (path.empty())
        throw std::runtime_error("no tree file given (use --tree)");
    return salt::parse_tree(read_text_file(path));
}

salt::GridDims parse_dims(const std::string& text) {
    salt::GridDims d;
    char sep1 = 0, sep2 = 0;
    std::istringstream ss(text);
    if (!(ss >> d.x >> sep1 >> d.y >> sep2 >> d.z) || (sep1 != 'x' && sep1 != ',') ||
        (sep2 != 'x' && sep2 != ','))
        throw std::runtime_error("cannot parse dims '" + text + "' (expected XxYxZ)");
    return d;
}

salt::Spacing parse_spacing(const std::string& text) {
    salt::Spacing s;
    char sep1 = 0, sep2 = 0;
    std::istringstream ss(text);
    if (!(ss >> s.x >> sep1 >> s.y >> sep2 >> s.z) || (sep1 != 'x' && sep1 != ',') ||
        (sep2 != 'x' && sep2 != ','))
        throw std::runtime_error("cannot parse spacing '" + text + "' (expected AxBxC)");
    return s;
}

void print_matrix(const char* name, const salt::BinaryMatrix& m) {
    std::cout << name << ":\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j)
            std::cout << (j ? " " : "") << int(m.at(i, j));
        std::cout << '\n';
    }
}

// ---------------------------------------------------------------------------
// train config file: one `key=value` per line, `#` comments, blank lines ok.

struct TrainFileConfig {
    salt::TrainConfig train;
    std::string checkpoint_path = "salt.ckpt";
    std::string log_path = "train_log.csv";
};

TrainFileConfig parse_train_config(const std::string& text) {
    TrainFileConfig cfg;
    std::istringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key=value");
        const std::string key = line.substr(first, eq - first);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "lr")
                cfg.train.lr = std::stod(value);
            else if (key == "weight_decay")
                cfg.train.weight_decay = std::stod(value);
            else if (key == "epochs")
                cfg.train.epochs = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "steps_per_epoch")
                cfg.train.steps_per_epoch = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "batch_size")
                cfg.train.batch_size = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "crop")
                cfg.train.crop = parse_dims(value);
            else if (key == "seed")
                cfg.train.seed = std::stoull(value);
            else if (key == "precision") {
                if (value == "double" || value == "f64")
                    cfg.train.precision = salt::TrainConfig::Precision::f64;
                else if (value == "single" || value == "f32")
                    cfg.train.precision = salt::TrainConfig::Precision::f32;
                else
                    throw std::runtime_error("precision must be 'double' or 'single'");
            } else if (key == "hidden1")
                cfg.train.hidden1 = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "hidden2")
                cfg.train.hidden2 = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "phantom_dims")
                cfg.train.phantom.dims = parse_dims(value);
            else if (key == "phantom_spacing")
                cfg.train.phantom.spacing = parse_spacing(value);
            else if (key == "noise_sigma")
                cfg.train.phantom.noise_sigma = std::stod(value);
            else if (key == "train_phantoms")
                cfg.train.train_phantoms = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "val_phantoms")
                cfg.train.val_phantoms = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "checkpoint")
                cfg.checkpoint_path = value;
            else if (key == "log")
                cfg.log_path = value;
            else
                throw std::runtime_error("unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": bad value for '" + key + "'");
        }
    }
    return cfg;
}

// ---------------------------------------------------------------------------

std::vector<salt::NodeId> resolve_classes(const salt::LabelTree& tree,
                                          const std::vector<std::string>& tokens) {
    std::vector<salt::NodeId> ids;
    for (const auto& tok : tokens) {
        if (auto id = tree.find(tok)) {
            ids.push_back(*id);
            continue;
        }
        try {
            const auto v = std::stoul(tok);
            if (v < tree.node_count()) {
                ids.push_back(static_cast<salt::NodeId>(v));
                continue;
            }
        } catch (...) {
        }
        throw std::runtime_error("unknown class '" + tok + "'");
    }
    return ids;
}

template <typename T>
salt::Field<double> run_network(const salt::Checkpoint& ckpt, const salt::Volume<float>& input) {
    const auto net = salt::net_from_checkpoint<T>(ckpt);
    salt::Field<T> in(1, input.dims());
    auto ch = in.channel(0);
    const salt::Volume<float> norm = salt::normalize_intensity(input);
    for (std::size_t i = 0; i < norm.size(); ++i)
        ch[i] = static_cast<T>(norm[i]);
    const salt::Field<T> logits = net.forward(in);
    salt::Field<double> out(logits.channels(), logits.dims());
    for (std::size_t i = 0; i < logits.size(); ++i)
        out.data()[i] = static_cast<double>(logits.data()[i]);
    return out;
}

int cmd_tree(const std::string& mode, const std::string& path) {
    if (mode == "validate") {
        try {
            const auto tree = load_tree(path);
            std::cout << "ok: " << tree.node_count() << " nodes, height " << tree.height()
                      << ", " << tree.leaves().size() << " leaves\n";
            return 0;
        } catch (const std::exception& e) {
            std::cout << "invalid: " << e.what() << '\n';
            return 1;
        }
    }
    const auto tree = load_tree(path);
    if (mode == "show") {
        for (salt::NodeId n : tree.topological_order()) {
            std::cout << std::string(2 * tree.depth(n), ' ') << n << ' ' << tree.name(n)
                      << '\n';
        }
        return 0;
    }
    if (mode == "matrices") {
        const auto m = salt::tree_matrices(tree);
        print_matrix("A", m.adjacency);
        print_matrix("R", m.reachability);
        print_matrix("S", m.sibling);
        return 0;
    }
    throw std::runtime_error("unknown tree subcommand '" + mode + "'");
}

json ci_json(const std::pair<double, double>& ci) { return json::array({ci.first, ci.second}); }

json aggregate_to_json(const salt::AggregateReport& rep) {
    json classes = json::array();
    for (const auto& c : rep.classes)
        classes.push_back({{"id", c.class_id},
                           {"name", c.class_name},
                           {"mean_dice", c.mean_dice},
                           {"mean_nsd", c.mean_nsd},
                           {"dice_ci", ci_json(c.dice_ci)},
                           {"nsd_ci", ci_json(c.nsd_ci)}});
    return json{{"volumes", rep.volume_count},
                {"bootstrap", {{"iterations", rep.bootstrap_iterations}, {"seed", rep.seed}}},
                {"classes", classes},
                {"macro",
                 {{"dice", rep.macro_dice},
                  {"nsd", rep.macro_nsd},
                  {"dice_ci", ci_json(rep.macro_dice_ci)},
                  {"nsd_ci", ci_json(rep.macro_nsd_ci)}}}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SALT: conditional-probability softmax over label trees"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string tree_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    app.add_option("--tree", tree_path, "label tree file");
    app.add_option("--seed", seed, "seed for seeded commands")->each([&](const std::string&) {
        seed_given = true;
    });

    // --- tree ---------------------------------------------------------------
    auto* tree_cmd = app.add_subcommand("tree", "inspect and validate tree files");
    tree_cmd->require_subcommand(1);
    std::string tree_file;
    for (const char* verb : {"validate", "show", "matrices"}) {
        auto* sub = tree_cmd->add_subcommand(verb);
        sub->add_option("file", tree_file, "tree file")->required();
    }

    // --- train --------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "run the toy training harness");
    std::string config_path, ckpt_out, log_out, export_val_prefix;
    std::uint64_t steps_override = 0;
    train_cmd->add_option("--config", config_path, "key=value config file");
    train_cmd->add_option("--checkpoint", ckpt_out, "checkpoint output path");
    train_cmd->add_option("--log", log_out, "training log CSV output path");
    train_cmd->add_option("--steps", steps_override,
                          "override: run exactly N steps (one epoch)");
    train_cmd->add_option("--export-val", export_val_prefix,
                          "write the first validation phantom as "
                          "<prefix>.intensity.saltvol/<prefix>.labels.saltvol");

    // --- infer --------------------------------------------------------------
    auto* infer_cmd = app.add_subcommand("infer", "predict labels for a volume");
    std::string infer_ckpt, infer_input, infer_output;
    std::vector<std::string> dump_tokens;
    std::string dump_prefix;
    infer_cmd->add_option("--checkpoint", infer_ckpt, "checkpoint path")->required();
    infer_cmd->add_option("--input", infer_input, "input SALTVOL (f32 intensity)")->required();
    infer_cmd->add_option("--output", infer_output, "output SALTVOL (u16 labels)")->required();
    infer_cmd->add_option("--dump-node-probs", dump_tokens,
                          "node ids/names whose cumulative probability maps to dump")
        ->delimiter(',');
    infer_cmd->add_option("--dump-prefix", dump_prefix,
                          "prefix for dumped maps (default: output path stem)");

    // --- eval ---------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    std::string eval_gt, eval_pred, eval_manifest, eval_csv, eval_json;
    std::vector<std::string> class_tokens;
    int bootstrap_n = 1000;
    eval_cmd->add_option("--gt", eval_gt, "ground-truth SALTVOL (u16 labels)");
    eval_cmd->add_option("--pred", eval_pred, "prediction SALTVOL (u16 labels)");
    eval_cmd->add_option("--manifest", eval_manifest,
                         "file of gt<TAB>pred paths, one pair per line");
    eval_cmd->add_option("--classes", class_tokens, "class names or ids")
        ->required()
        ->delimiter(',');
    eval_cmd->add_option("--bootstrap", bootstrap_n, "bootstrap iterations");
    eval_cmd->add_option("--csv", eval_csv, "per-(volume,class) CSV output path");
    eval_cmd->add_option("--json", eval_json, "aggregate JSON output path");

    // --- bench --------------------------------------------------------------
    auto* bench_cmd = app.add_subcommand("bench", "measure inference throughput");
    std::string bench_ckpt, bench_dims = "64x64x32";
    int bench_reps = 3;
    bench_cmd->add_option("--checkpoint", bench_ckpt, "checkpoint path")->required();
    bench_cmd->add_option("--dims", bench_dims, "synthetic volume dims XxYxZ");
    bench_cmd->add_option("--reps", bench_reps, "repetitions (median reported)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (tree_cmd->parsed()) {
            for (const char* verb : {"validate", "show", "matrices"})
                if (tree_cmd->get_subcommand(verb)->parsed())
                    return cmd_tree(verb, tree_file);
        }

        if (train_cmd->parsed()) {
            TrainFileConfig cfg;
            if (!config_path.empty())
                cfg = parse_train_config(read_text_file(config_path));
            if (seed_given)
                cfg.train.seed = seed;
            if (steps_override > 0) {
                cfg.train.epochs = 1;
                cfg.train.steps_per_epoch = static_cast<std::uint32_t>(steps_override);
            }
            if (!ckpt_out.empty())
                cfg.checkpoint_path = ckpt_out;
            if (!log_out.empty())
                cfg.log_path = log_out;
            const salt::LabelTree tree =
                tree_path.empty() ? salt::make_t1_tree() : load_tree(tree_path);

            const salt::TrainResult result = salt::train(cfg.train, tree);
            salt::write_checkpoint(cfg.checkpoint_path, result.checkpoint);
            write_text_file(cfg.log_path, salt::train_log_to_csv(result.log));
            if (!export_val_prefix.empty()) {
                const salt::Phantom ph =
                    salt::generate_phantom(cfg.train.phantom, tree, cfg.train.seed + 2000);
                salt::write_saltvol(export_val_prefix + ".intensity.saltvol", ph.intensity);
                salt::write_saltvol(export_val_prefix + ".labels.saltvol", ph.labels);
            }
            std::printf("steps: %llu\n",
                        static_cast<unsigned long long>(result.log.size()));
            std::printf("final validation mean leaf dice: %.6f\n", result.final_val_dice);
            return 0;
        }

        if (infer_cmd->parsed()) {
            const salt::LabelTree tree = load_tree(tree_path);
            const salt::Checkpoint ckpt = salt::read_checkpoint(infer_ckpt);
            if (ckpt.tree_hash != salt::tree_hash(tree))
                throw std::runtime_error("checkpoint tree hash does not match '" + tree_path +
                                         "'");
            const salt::SaltVolData data = salt::read_saltvol(infer_input);
            const auto* input = std::get_if<salt::Volume<float>>(&data);
            if (!input)
                throw std::runtime_error("'" + infer_input +
                                         "': dtype mismatch (expected f32 intensity)");

            const salt::Field<double> logits = salt::checkpoint_is_f64(ckpt)
                                                   ? run_network<double>(ckpt, *input)
                                                   : run_network<float>(ckpt, *input);
            const salt::SiblingGroups groups = salt::sibling_groups(tree);
            const salt::ProbVolume cum =
                salt::cumulative_probs(salt::conditional_log_probs(logits, groups), tree);
            const salt::LabelVolume pred = salt::predict_labels(cum, tree, input->spacing());
            salt::write_saltvol(infer_output, pred);

            if (!dump_tokens.empty()) {
                std::string prefix = dump_prefix;
                if (prefix.empty()) {
                    prefix = infer_output;
                    const auto dot = prefix.rfind(".saltvol");
                    if (dot != std::string::npos)
                        prefix.resize(dot);
                }
                const salt::ProbVolume lin = salt::to_linear(cum);
                for (salt::NodeId id : resolve_classes(tree, dump_tokens)) {
                    salt::Volume<float> prob(input->dims(), 0.0f, input->spacing());
                    auto ch = lin.values.channel(id);
                    for (std::size_t i = 0; i < prob.size(); ++i)
                        prob[i] = static_cast<float>(ch[i]);
                    salt::write_saltvol(prefix + ".node" + std::to_string(id) + ".saltvol",
                                        prob);
                }
            }
            std::printf("wrote %s (%ux%ux%u)\n", infer_output.c_str(), pred.dims().x,
                        pred.dims().y, pred.dims().z);
            return 0;
        }

        if (eval_cmd->parsed()) {
            const salt::LabelTree tree = load_tree(tree_path);
            const std::vector<salt::NodeId> classes = resolve_classes(tree, class_tokens);

            std::vector<std::pair<std::string, std::string>> pairs;
            if (!eval_manifest.empty()) {
                std::istringstream ss(read_text_file(eval_manifest));
                std::string line;
                while (std::getline(ss, line)) {
                    if (!line.empty() && line.back() == '\r')
                        line.pop_back();
                    if (line.empty() || line[0] == '#')
                        continue;
                    const auto tab = line.find('\t');
                    if (tab == std::string::npos)
                        throw std::runtime_error("manifest line lacks a TAB: " + line);
                    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
                }
                if (pairs.empty())
                    throw std::runtime_error("manifest lists no pairs");
            } else if (!eval_gt.empty() && !eval_pred.empty()) {
                pairs.emplace_back(eval_gt, eval_pred);
            } else {
                throw std::runtime_error("eval needs --gt/--pred or --manifest");
            }

            std::vector<salt::ScoreRow> rows;
            for (const auto& [gt_path, pred_path] : pairs) {
                const auto gt_data = salt::read_saltvol(gt_path);
                const auto pred_data = salt::read_saltvol(pred_path);
                const auto* gt = std::get_if<salt::LabelVolume>(&gt_data);
                const auto* pred = std::get_if<salt::LabelVolume>(&pred_data);
                if (!gt || !pred)
                    throw std::runtime_error("eval inputs must be u16 label volumes");
                const salt::ScoreSet s =
                    salt::evaluate_pair(*gt, *pred, tree, classes, gt->spacing(), gt_path);
                rows.insert(rows.end(), s.rows.begin(), s.rows.end());
            }

            const std::string csv = salt::scores_to_csv(rows);
            if (eval_csv.empty())
                std::cout << csv;
            else
                write_text_file(eval_csv, csv);

            const salt::AggregateReport rep =
                salt::aggregate_scores(rows, bootstrap_n, seed_given ? seed : 0);
            const json j = aggregate_to_json(rep);
            if (eval_json.empty())
                std::cout << j.dump(2) << '\n';
            else
                write_text_file(eval_json, j.dump(2) + "\n");
            return 0;
        }

        if (bench_cmd->parsed()) {
            const salt::Checkpoint ckpt = salt::read_checkpoint(bench_ckpt);
            const salt::LabelTree tree =
                tree_path.empty() ? salt::make_t1_tree() : load_tree(tree_path);
            if (ckpt.tree_hash != salt::tree_hash(tree))
                throw std::runtime_error("checkpoint tree hash does not match the tree");
            const salt::GridDims dims = parse_dims(bench_dims);
            if (bench_reps < 1)
                throw std::runtime_error("reps must be >= 1");

            salt::Volume<float> input(dims, 0.0f, {1.5, 1.5, 1.5});
            std::mt19937_64 gen(seed_given ? seed : 0);
            for (auto& v : input)
                v = static_cast<float>(-1024.0 + 2048.0 * salt::rng::uniform_unit(gen));

            const salt::SiblingGroups groups = salt::sibling_groups(tree);
            using clock = std::chrono::steady_clock;
            std::vector<double> net_ms, head_ms, total_ms;
            std::printf("rep,net_ms,head_ms,total_ms\n");
            for (int r = 0; r < bench_reps; ++r) {
                const auto t0 = clock::now();
                const salt::Field<double> logits = salt::checkpoint_is_f64(ckpt)
                                                       ? run_network<double>(ckpt, input)
                                                       : run_network<float>(ckpt, input);
                const auto t1 = clock::now();
                const salt::ProbVolume cum =
                    salt::cumulative_probs(salt::conditional_log_probs(logits, groups), tree);
                const salt::LabelVolume pred =
                    salt::predict_labels(cum, tree, input.spacing());
                const auto t2 = clock::now();
                (void)pred;
                const double net = std::chrono::duration<double, std::milli>(t1 - t0).count();
                const double head = std::chrono::duration<double, std::milli>(t2 - t1).count();
                net_ms.push_back(net);
                head_ms.push_back(head);
                total_ms.push_back(net + head);
                std::printf("%d,%.3f,%.3f,%.3f\n", r, net, head, net + head);
            }
            auto median = [](std::vector<double> v) {
                std::sort(v.begin(), v.end());
                return v[v.size() / 2];
            };
            const double med = median(total_ms);
            std::printf("median_net_ms: %.3f\n", median(net_ms));
            std::printf("median_head_ms: %.3f\n", median(head_ms));
            std::printf("median_total_ms: %.3f\n", med);
            std::printf("ms_per_slice: %.3f\n", med / dims.z);
            std::printf("voxels_per_second: %.0f\n",
                        static_cast<double>(dims.total()) / (med / 1000.0));
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
