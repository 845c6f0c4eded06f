// licda: learned image compression with decoder-side domain adapters.
//
// Subcommands: datagen, pretrain, adapt, encode, decode, eval.
// Every run writes its fully resolved configuration next to its outputs.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "licda/bitstream.hpp"
#include "licda/checkpoint.hpp"
#include "licda/evaluate.hpp"
#include "licda/metrics.hpp"
#include "licda/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace licda;

namespace {

// Exit codes: 0 ok, 2 configuration, 3 data, 4 codec/framing, 5 compatibility.
int error_code(const Error& e) {
    if (dynamic_cast<const CompatError*>(&e)) return 5;
    if (dynamic_cast<const CodecError*>(&e) || dynamic_cast<const FramingError*>(&e)) return 4;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    return 2;  // ConfigError, ContractError, DimError
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << text;
}

void write_resolved_config(const fs::path& out_dir, const std::string& command, const ordered_json& j) {
    ordered_json full;
    full["command"] = command;
    full["options"] = j;
    write_text(out_dir / ("resolved_config." + command + ".json"), full.dump(2) + "\n");
}

// Merges a JSON config file (if given) under the command's option values:
// file values become defaults, explicit flags win.
void apply_config_file(CLI::App* cmd, const std::string& config_path) {
    if (config_path.empty()) return;
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot open config file " + config_path);
    ordered_json j = ordered_json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + config_path + " is not valid JSON");
    for (const auto& [key, value] : j.items()) {
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (!opt) throw ConfigError("config key '" + key + "' is not an option of this command");
        if (opt->count() > 0) continue;  // explicit flag wins
        const std::string s = value.is_string() ? value.get<std::string>() : value.dump();
        opt->add_result(s);
        opt->run_callback();
    }
}

struct CommonTrainOpts {
    std::string dataset, source = "natural", out = "runs/out", config;
    std::uint64_t seed = 1;
    int epochs = 30, batch_size = 8, crop = 64, patience = 15;
    double lr = 1e-4;

    void attach(CLI::App* cmd, bool dataset_required = true) {
        auto* d = cmd->add_option("--dataset", dataset, "dataset root (root/<domain>/*.png)");
        if (dataset_required) d->required();
        cmd->add_option("--source", source, "source-domain directory name (label 0)");
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--config", config, "JSON config file; flags override");
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch-size", batch_size, "batch size");
        cmd->add_option("--crop", crop, "training crop size");
        cmd->add_option("--patience", patience, "plateau patience (epochs)");
        cmd->add_option("--lr", lr, "initial learning rate");
    }

    ordered_json json() const {
        return {{"dataset", dataset}, {"source", source}, {"out", out},     {"seed", seed},
                {"epochs", epochs},   {"batch-size", batch_size}, {"crop", crop}, {"patience", patience},
                {"lr", lr}};
    }
};

TrainConfig to_train_config(const CommonTrainOpts& o) {
    TrainConfig tc;
    tc.lr = o.lr;
    tc.batch_size = o.batch_size;
    tc.epochs = o.epochs;
    tc.patience = o.patience;
    tc.seed = o.seed;
    tc.crop_size = o.crop;
    return tc;
}

std::string metric_log_text(const std::vector<EpochRecord>& log) {
    std::string out;
    for (const auto& r : log) out += record_line(r) + "\n";
    return out;
}

// ---------------------------------------------------------------------------

int cmd_datagen(const std::string& out, const std::string& domains, int count, int test_count, int height,
                int width, std::uint64_t seed) {
    if (count < 1) throw ConfigError("--count must be >= 1");
    std::vector<std::pair<std::string, SyntheticKind>> doms;
    std::stringstream ss(domains);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw ConfigError("bad --domains entry '" + part + "' (want name=kind)");
        doms.emplace_back(part.substr(0, eq), synthetic_kind_from_string(part.substr(eq + 1)));
    }
    if (doms.empty()) throw ConfigError("--domains is empty");
    for (const auto& [name, kind] : doms) {
        const fs::path dir = fs::path(out) / name;
        fs::create_directories(dir);
        SyntheticDomainSpec spec{kind, derive_seed(seed, name), height, width, count + test_count};
        for (int i = 0; i < count + test_count; ++i) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%05d.png", i);
            write_png((dir / buf).string(), synthesize(spec, i));
        }
        std::cout << name << ": " << (count + test_count) << " images (" << to_string(kind) << ")\n";
    }
    write_resolved_config(out, "datagen",
                          {{"out", out}, {"domains", domains}, {"count", count}, {"test-count", test_count},
                           {"height", height}, {"width", width}, {"seed", seed}});
    return 0;
}

int cmd_pretrain(const CommonTrainOpts& o, std::vector<int> qualities, int M, int N, const std::string& resume) {
    if (qualities.empty()) qualities = {0, 1, 2, 3};
    fs::create_directories(o.out);
    DomainSplits all = ingest_directory(o.dataset, o.source, o.seed);
    // stage A trains on the source domain only
    DomainSplits src;
    src.K = 0;
    src.domain_names = {all.domain_names.front()};
    auto filter = [](const DomainDataset& in, DomainDataset& outd) {
        outd.split = in.split;
        outd.K = 0;
        for (const auto& it : in.items)
            if (it.label == 0) outd.items.push_back({it.path, 0});
    };
    filter(all.train, src.train);
    filter(all.val, src.val);
    filter(all.test, src.test);
    write_text(fs::path(o.out) / "split_manifest.txt", split_manifest(all));

    ImageCache cache;
    for (int q : qualities) {
        CodecConfig cfg = config_for_quality(q, M, N);
        CodecModel<float> model = make_codec_model<float>(cfg, derive_seed(o.seed, "backbone/" + std::to_string(q)));
        TrainConfig tc = to_train_config(o);
        Trainer trainer(model, tc, Stage::kPretrain);
        if (!resume.empty()) {
            Checkpoint prev = load_checkpoint(resume);
            model = restore_model(prev);
            Trainer resumed(model, tc, Stage::kPretrain);
            resumed.restore(prev);
            resumed.run(src, cache);
            Checkpoint ck = snapshot_model(model);
            resumed.persist(ck);
            save_checkpoint((fs::path(o.out) / ("backbone_q" + std::to_string(q) + ".ckpt")).string(), ck);
            write_text(fs::path(o.out) / ("metrics_backbone_q" + std::to_string(q) + ".jsonl"),
                       metric_log_text(resumed.log()));
            continue;
        }
        trainer.run(src, cache);
        Checkpoint ck = snapshot_model(model);
        trainer.persist(ck);
        save_checkpoint((fs::path(o.out) / ("backbone_q" + std::to_string(q) + ".ckpt")).string(), ck);
        write_text(fs::path(o.out) / ("metrics_backbone_q" + std::to_string(q) + ".jsonl"),
                   metric_log_text(trainer.log()));
        std::cout << "backbone_q" << q << ": final val loss " << trainer.log().back().loss << "\n";
    }
    ordered_json j = o.json();
    j["qualities"] = qualities;
    j["latent-channels"] = M;
    j["hidden-channels"] = N;
    write_resolved_config(o.out, "pretrain", j);
    return 0;
}

int cmd_adapt(const CommonTrainOpts& o, const std::string& backbone_dir, std::vector<int> qualities,
              const std::string& blend, double gamma, int gate_channels, int gate_pool, int gate_adaptive,
              std::uint64_t adapter_seed) {
    if (qualities.empty()) qualities = {0, 1, 2, 3};
    fs::create_directories(o.out);
    const PolicyKind policy = policy_from_string(blend);
    DomainSplits data = ingest_directory(o.dataset, o.source, o.seed);
    if (data.K < 1) throw ConfigError("adaptation needs at least one target domain besides the source");
    write_text(fs::path(o.out) / "split_manifest.txt", split_manifest(data));

    ImageCache cache;
    for (int q : qualities) {
        const std::string in = (fs::path(backbone_dir) / ("backbone_q" + std::to_string(q) + ".ckpt")).string();
        CodecModel<float> model = restore_model(load_checkpoint(in));
        const std::uint64_t before = model.backbone_hash();

        GateConfig gc;
        gc.conv_channels = gate_channels;
        gc.pool_kernel = gate_pool;
        gc.adaptive_out = gate_adaptive;
        gc.K = data.K;
        attach_adapters(model, data.K, AdapterInit::kGaussian, derive_seed(adapter_seed, "bank/" + std::to_string(q)));
        attach_gate(model, gc, derive_seed(adapter_seed, "gate/" + std::to_string(q)));

        TrainConfig tc = to_train_config(o);
        tc.gamma = gamma;
        Trainer trainer(model, tc, Stage::kAdapt, policy);
        trainer.run(data, cache);
        if (model.backbone_hash() != before) throw CodecError("backbone changed during adaptation");

        Checkpoint ck = snapshot_model(model);
        trainer.persist(ck);
        ck.meta["domains"] = data.domain_names;
        save_checkpoint((fs::path(o.out) / ("adapted_q" + std::to_string(q) + ".ckpt")).string(), ck);
        write_text(fs::path(o.out) / ("metrics_adapted_q" + std::to_string(q) + ".jsonl"),
                   metric_log_text(trainer.log()));
        std::cout << "adapted_q" << q << ": gate_acc " << trainer.log().back().gate_acc << " (val)\n";
    }
    ordered_json j = o.json();
    j["backbone-dir"] = backbone_dir;
    j["qualities"] = qualities;
    j["blend"] = blend;
    j["gamma"] = gamma;
    j["gate-channels"] = gate_channels;
    j["gate-pool"] = gate_pool;
    j["gate-adaptive"] = gate_adaptive;
    j["adapter-seed"] = adapter_seed;
    write_resolved_config(o.out, "adapt", j);
    return 0;
}

int cmd_encode(const std::string& input, const std::string& checkpoint, const std::string& out,
               const std::string& blend, std::optional<int> label) {
    CodecModel<float> model = restore_model(load_checkpoint(checkpoint));
    const PolicyKind policy = policy_from_string(blend);
    Image img = read_png(input);
    validate_image(img);

    Latent<float> y = encode_analysis(model, img);
    std::vector<float> v;
    if (model.gate && model.bank) {
        v = apply_policy_vec(gate_distribution(model, y), label, policy);
    } else {
        if (policy == PolicyKind::kOracle && !label) throw ContractError("oracle policy requires --label");
        v.assign(static_cast<std::size_t>(model.K()) + 1, 0.0f);
        v[static_cast<std::size_t>(label.value_or(0))] = 1.0f;
    }
    Latent<float> y_hat = quantize(y, QuantizeMode::kEval);

    StreamMeta meta;
    meta.orig_h = img.height;
    meta.orig_w = img.width;
    meta.quality_index = model.cfg.quality_index;
    meta.K = model.K();
    meta.policy = policy;
    const auto bytes = encode_stream(model, y_hat, v, meta);
    write_file(out, bytes);
    std::cout << "bpp " << bits_per_pixel(bytes.size(), img.height, img.width) << "\n";
    return 0;
}

int cmd_decode(const std::string& input, const std::string& checkpoint, const std::string& out,
               const std::string& reference, bool force) {
    CodecModel<float> model = restore_model(load_checkpoint(checkpoint));
    const auto bytes = read_file(input);
    DecodedStream dec = decode_stream(model, bytes, force);
    if (!dec.warning.empty()) std::cerr << "warning: " << dec.warning << "\n";
    Image rec = dec.used_adapters
                    ? decode_synthesis(model, dec.latent, &dec.v, dec.meta.orig_h, dec.meta.orig_w)
                    : decode_synthesis<float>(model, dec.latent, nullptr, dec.meta.orig_h, dec.meta.orig_w);
    write_png(out, rec);
    if (!reference.empty()) {
        Image ref = read_png(reference);
        std::cout << "psnr " << psnr(ref, rec) << "\n";
    }
    return 0;
}

int cmd_eval(const CommonTrainOpts& o, const std::string& checkpoints_dir, std::vector<int> qualities,
             const std::string& blend, const std::string& bd_variant_name, bool plots) {
    if (qualities.empty()) qualities = {0, 1, 2, 3};
    fs::create_directories(o.out);
    const BdVariant variant = bd_variant_name == "piecewise" ? BdVariant::kPiecewise
                              : bd_variant_name == "cubic"
                                  ? BdVariant::kCubic
                                  : throw ConfigError("--bd-variant must be cubic or piecewise");

    std::vector<PolicyKind> policies;
    if (blend == "all")
        policies = {PolicyKind::kProposed, PolicyKind::kTop1, PolicyKind::kOracle};
    else
        policies = {policy_from_string(blend)};

    std::vector<CodecModel<float>> models;
    std::vector<std::string> trained_domains;
    for (int q : qualities) {
        const std::string path = (fs::path(checkpoints_dir) / ("adapted_q" + std::to_string(q) + ".ckpt")).string();
        Checkpoint ck = load_checkpoint(path);
        if (trained_domains.empty() && ck.meta.contains("domains"))
            trained_domains = ck.meta["domains"].get<std::vector<std::string>>();
        models.push_back(restore_model(ck));
    }

    DomainSplits data = ingest_directory(o.dataset, o.source, o.seed);
    std::vector<EvalDataset> sets;
    for (int label = 0; label <= data.K; ++label) {
        EvalDataset ds;
        ds.name = data.domain_names[static_cast<std::size_t>(label)];
        // adapter domain id by trained-domain name, -1 when this domain was
        // not part of adaptation (unseen-domain evaluation)
        int mapped = -1;
        for (std::size_t i = 0; i < trained_domains.size(); ++i)
            if (trained_domains[i] == ds.name) mapped = static_cast<int>(i);
        for (const auto& it : data.test.items)
            if (it.label == label) ds.items.push_back({it.path, mapped});
        if (!ds.items.empty()) sets.push_back(std::move(ds));
    }

    ImageCache cache;
    EvalReport rep = evaluate_model(models, sets, policies, cache, variant);
    write_text(fs::path(o.out) / "report.txt", rep.to_text());
    write_text(fs::path(o.out) / "report.json", rep.to_json().dump(2) + "\n");
    write_text(fs::path(o.out) / "records.jsonl", rep.records_jsonl());
    if (plots)
        for (const auto& d : rep.datasets)
            write_text(fs::path(o.out) / ("rd_" + d.dataset + ".svg"), render_rd_svg(d));
    std::cout << rep.to_text();

    ordered_json j = o.json();
    j["checkpoints"] = checkpoints_dir;
    j["qualities"] = qualities;
    j["blend"] = blend;
    j["bd-variant"] = bd_variant_name;
    write_resolved_config(o.out, "eval", j);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"learned image compression with decoder-side domain adapters"};
    app.require_subcommand(1);

    // datagen
    auto* dg = app.add_subcommand("datagen", "generate synthetic domain datasets (PNG directories)");
    std::string dg_out = "data/synth", dg_domains = "natural=smooth-texture,sketch=line-sketch,comic=flat-regions";
    int dg_count = 200, dg_test = 0, dg_h = 96, dg_w = 96;
    std::uint64_t dg_seed = 7;
    dg->add_option("--out", dg_out, "output root");
    dg->add_option("--domains", dg_domains, "comma list of name=kind");
    dg->add_option("--count", dg_count, "images per domain");
    dg->add_option("--test-count", dg_test, "extra images per domain");
    dg->add_option("--height", dg_h, "image height");
    dg->add_option("--width", dg_w, "image width");
    dg->add_option("--seed", dg_seed, "seed");

    // pretrain
    auto* pt = app.add_subcommand("pretrain", "stage A: rate-distortion pretraining of the backbone");
    CommonTrainOpts pt_o;
    pt_o.attach(pt);
    std::vector<int> pt_q;
    int pt_M = 32, pt_N = 64;
    std::string pt_resume;
    pt->add_option("--quality", pt_q, "quality indices (default: all four)");
    pt->add_option("--latent-channels", pt_M, "latent channels M");
    pt->add_option("--hidden-channels", pt_N, "hidden channels N");
    pt->add_option("--resume", pt_resume, "checkpoint to resume from");

    // adapt
    auto* ad = app.add_subcommand("adapt", "stage B: train adapters + gate on a frozen backbone");
    CommonTrainOpts ad_o;
    ad_o.attach(ad);
    std::string ad_backbones = "runs/pretrain", ad_blend = "proposed";
    std::vector<int> ad_q;
    double ad_gamma = 0.5;
    int ad_gc = 32, ad_gp = 2, ad_ga = 2;
    std::uint64_t ad_seed2 = 11;
    ad->add_option("--backbone-dir", ad_backbones, "directory with backbone_q*.ckpt");
    ad->add_option("--quality", ad_q, "quality indices (default: all four)");
    ad->add_option("--blend", ad_blend, "training blend policy: proposed|top1|oracle");
    ad->add_option("--gamma", ad_gamma, "MSE weight in the adaptation loss");
    ad->add_option("--gate-channels", ad_gc, "gate conv channels");
    ad->add_option("--gate-pool", ad_gp, "gate max-pool kernel");
    ad->add_option("--gate-adaptive", ad_ga, "gate adaptive pooling target");
    ad->add_option("--adapter-seed", ad_seed2, "seed for adapter/gate init");

    // encode / decode
    auto* en = app.add_subcommand("encode", "encode a PNG to a .licb stream");
    std::string en_in, en_ck, en_out = "out.licb", en_blend = "proposed";
    int en_label = -1;
    en->add_option("--input", en_in, "input PNG")->required();
    en->add_option("--checkpoint", en_ck, "model checkpoint")->required();
    en->add_option("--out", en_out, "output .licb path");
    en->add_option("--blend", en_blend, "blend policy: proposed|top1|oracle");
    en->add_option("--label", en_label, "domain label (required for oracle)");

    auto* de = app.add_subcommand("decode", "decode a .licb stream to PNG");
    std::string de_in, de_ck, de_out = "out.png", de_ref;
    bool de_force = false;
    de->add_option("--input", de_in, "input .licb")->required();
    de->add_option("--checkpoint", de_ck, "model checkpoint")->required();
    de->add_option("--out", de_out, "output PNG path");
    de->add_option("--reference", de_ref, "reference PNG; prints PSNR");
    de->add_flag("--force", de_force, "decode adapter-free on K mismatch");

    // eval
    auto* ev = app.add_subcommand("eval", "RD curves, BD metrics and gate-distribution report");
    CommonTrainOpts ev_o;
    ev_o.attach(ev);
    std::string ev_ck = "runs/adapt", ev_blend = "all", ev_bd = "cubic";
    std::vector<int> ev_q;
    bool ev_plots = false;
    ev->add_option("--checkpoints", ev_ck, "directory with adapted_q*.ckpt");
    ev->add_option("--quality", ev_q, "quality indices (default: all four)");
    ev->add_option("--blend", ev_blend, "policy to evaluate, or 'all'");
    ev->add_option("--bd-variant", ev_bd, "cubic|piecewise");
    ev->add_flag("--plots", ev_plots, "emit RD plots as SVG");

    try {
        app.parse(argc, argv);
        for (auto* cmd : {pt, ad, ev}) {
            if (cmd->parsed()) {
                const std::string cfg = cmd->get_option("--config")->as<std::string>();
                apply_config_file(cmd, cfg);
            }
        }
        if (dg->parsed()) return cmd_datagen(dg_out, dg_domains, dg_count, dg_test, dg_h, dg_w, dg_seed);
        if (pt->parsed()) return cmd_pretrain(pt_o, pt_q, pt_M, pt_N, pt_resume);
        if (ad->parsed()) return cmd_adapt(ad_o, ad_backbones, ad_q, ad_blend, ad_gamma, ad_gc, ad_gp, ad_ga, ad_seed2);
        if (en->parsed())
            return cmd_encode(en_in, en_ck, en_out, en_blend,
                              en_label >= 0 ? std::optional<int>(en_label) : std::nullopt);
        if (de->parsed()) return cmd_decode(de_in, de_ck, de_out, de_ref, de_force);
        if (ev->parsed()) return cmd_eval(ev_o, ev_ck, ev_q, ev_blend, ev_bd, ev_plots);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return error_code(e);
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
