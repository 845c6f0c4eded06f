#include "licda/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace licda {

namespace {

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

}  // namespace

EvalReport evaluate_model(std::vector<CodecModel<float>>& models, const std::vector<EvalDataset>& datasets,
                          const std::vector<PolicyKind>& policies, ImageCache& cache, BdVariant variant) {
    if (models.size() < 4) throw ConfigError("evaluation needs at least 4 quality checkpoints");
    if (datasets.empty()) throw ConfigError("evaluation needs at least one dataset");
    for (const auto& d : datasets)
        if (d.items.empty()) throw ConfigError("evaluation dataset '" + d.name + "' is empty");

    std::sort(models.begin(), models.end(),
              [](const CodecModel<float>& a, const CodecModel<float>& b) { return a.cfg.quality_index < b.cfg.quality_index; });

    EvalReport rep;
    {
        auto count = [](auto&& visit_owner) {
            std::int64_t n = 0;
            visit_owner([&n](Parameter<float>& p) { n += p.tensor().numel(); });
            return n;
        };
        CodecModel<float>& m0 = models.front();
        rep.encoder_params = count([&m0](auto&& f) { m0.encoder.visit(f); });
        rep.decoder_params = count([&m0](auto&& f) { m0.decoder.visit(f); });
        if (m0.bank) rep.adapter_params = count([&m0](auto&& f) { m0.bank->visit(f); });
        if (m0.gate) rep.gate_params = count([&m0](auto&& f) { m0.gate->visit(f); });
    }

    for (const auto& ds : datasets) {
        DatasetReport dr;
        dr.dataset = ds.name;
        std::vector<double> mean_v;

        for (auto& model : models) {
            QualityPoint qp;
            qp.quality = model.cfg.quality_index;
            double bpp_acc = 0, anchor_acc = 0;
            std::map<std::string, double> policy_acc;
            for (const auto& pk : policies) policy_acc[to_string(pk)] = 0;

            for (const auto& item : ds.items) {
                const Image& img = cache.get(item.path);
                Latent<float> y = encode_analysis(model, img);
                std::vector<float> v_gate;
                if (model.gate && model.bank) {
                    Latent<float> gate_in = y;
                    v_gate = gate_distribution(model, gate_in);
                } else {
                    v_gate.assign(static_cast<std::size_t>(model.K()) + 1, 0.0f);
                    v_gate[0] = 1.0f;
                }
                Latent<float> y_hat = quantize(y, QuantizeMode::kEval);
                StreamMeta meta;
                meta.orig_h = img.height;
                meta.orig_w = img.width;
                meta.quality_index = model.cfg.quality_index;
                meta.K = model.K();
                meta.policy = PolicyKind::kProposed;
                const auto bytes = encode_stream(model, y_hat, v_gate, meta);
                DecodedStream dec = decode_stream(model, bytes);

                bpp_acc += bits_per_pixel(bytes.size(), img.height, img.width);
                Image anchor_img = decode_synthesis<float>(model, dec.latent, nullptr, img.height, img.width);
                anchor_acc += psnr(img, anchor_img);

                const std::vector<float>& v_dec = dec.used_adapters ? dec.v : v_gate;
                if (mean_v.empty()) mean_v.assign(v_dec.size(), 0.0);
                for (std::size_t i = 0; i < v_dec.size(); ++i) mean_v[i] += static_cast<double>(v_dec[i]);

                for (const auto& pk : policies) {
                    double p;
                    if (model.bank && dec.used_adapters) {
                        std::optional<int> label;
                        if (item.label >= 0) label = item.label;
                        std::vector<float> v_p = apply_policy_vec(v_dec, label, pk);
                        Image rec = decode_synthesis(model, dec.latent, &v_p, img.height, img.width);
                        p = psnr(img, rec);
                    } else {
                        p = psnr(img, anchor_img);
                    }
                    policy_acc[to_string(pk)] += p;
                }
            }
            const double inv = 1.0 / static_cast<double>(ds.items.size());
            qp.bpp = bpp_acc * inv;
            qp.psnr_anchor = anchor_acc * inv;
            for (auto& [k, v] : policy_acc) qp.psnr[k] = v * inv;
            dr.points.push_back(qp);
        }

        double total = 0;
        for (double& v : mean_v) total += v;
        if (total > 0)
            for (double& v : mean_v) v /= total;
        dr.mean_v = mean_v;

        dr.anchor_curve.label = ds.name + "/anchor";
        for (const auto& qp : dr.points) dr.anchor_curve.points.push_back({qp.bpp, qp.psnr_anchor});
        for (const auto& pk : policies) {
            const std::string name = to_string(pk);
            RDCurve c;
            c.label = ds.name + "/" + name;
            for (const auto& qp : dr.points) c.points.push_back({qp.bpp, qp.psnr.at(name)});
            dr.curves[name] = c;
            try {
                dr.bd[name] = bd_metrics(dr.anchor_curve, c, variant);
            } catch (const Error& e) {
                dr.bd_error[name] = e.what();
            }
        }
        rep.datasets.push_back(std::move(dr));
    }
    return rep;
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["params"] = {{"encoder", encoder_params},
                   {"decoder", decoder_params},
                   {"adapters", adapter_params},
                   {"gate", gate_params},
                   {"adapter_to_decoder_ratio",
                    decoder_params ? static_cast<double>(adapter_params) / decoder_params : 0.0},
                   {"gate_to_encoder_ratio", encoder_params ? static_cast<double>(gate_params) / encoder_params : 0.0}};
    j["datasets"] = nlohmann::ordered_json::array();
    for (const auto& d : datasets) {
        nlohmann::ordered_json dj;
        dj["name"] = d.dataset;
        dj["mean_v"] = d.mean_v;
        dj["points"] = nlohmann::ordered_json::array();
        for (const auto& p : d.points) {
            nlohmann::ordered_json pj;
            pj["quality"] = p.quality;
            pj["bpp"] = p.bpp;
            pj["psnr_anchor"] = p.psnr_anchor;
            for (const auto& [k, v] : p.psnr) pj["psnr_" + k] = v;
            dj["points"].push_back(pj);
        }
        for (const auto& [k, v] : d.bd) dj["bd"][k] = {{"bd_rate_percent", v.bd_rate_percent}, {"bd_psnr_db", v.bd_psnr_db}};
        for (const auto& [k, v] : d.bd_error) dj["bd_error"][k] = v;
        j["datasets"].push_back(dj);
    }
    return j;
}

std::string EvalReport::records_jsonl() const {
    std::ostringstream os;
    for (const auto& d : datasets)
        for (const auto& p : d.points)
            for (const auto& [policy, ps] : p.psnr) {
                nlohmann::ordered_json r;
                r["dataset"] = d.dataset;
                r["quality"] = p.quality;
                r["policy"] = policy;
                r["bpp"] = p.bpp;
                r["psnr"] = ps;
                r["psnr_anchor"] = p.psnr_anchor;
                os << r.dump() << "\n";
            }
    return os.str();
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "== parameters ==\n";
    os << "encoder " << encoder_params << "  decoder " << decoder_params << "  adapters " << adapter_params
       << " (" << fmt(decoder_params ? 100.0 * adapter_params / decoder_params : 0.0, 2) << "% of decoder)  gate "
       << gate_params << " (" << fmt(encoder_params ? 100.0 * gate_params / encoder_params : 0.0, 2)
       << "% of encoder)\n\n";
    for (const auto& d : datasets) {
        os << "== dataset " << d.dataset << " ==\n";
        os << "quality |   bpp   | anchor";
        std::vector<std::string> policies;
        if (!d.points.empty())
            for (const auto& [k, _] : d.points.front().psnr) policies.push_back(k);
        for (const auto& p : policies) os << " | " << p;
        os << "\n";
        for (const auto& p : d.points) {
            os << "   q" << p.quality << "   | " << fmt(p.bpp) << " | " << fmt(p.psnr_anchor, 3);
            for (const auto& name : policies) os << " | " << fmt(p.psnr.at(name), 3);
            os << "\n";
        }
        os << "mean_v:";
        for (double v : d.mean_v) os << " " << fmt(v);
        os << "\n";
        for (const auto& [k, v] : d.bd)
            os << "bd[" << k << "]: BD-Rate " << fmt(v.bd_rate_percent, 3) << "%  BD-PSNR " << fmt(v.bd_psnr_db, 3)
               << " dB\n";
        for (const auto& [k, e] : d.bd_error) os << "bd[" << k << "]: error: " << e << "\n";
        os << "\n";
    }
    return os.str();
}

std::string render_rd_svg(const DatasetReport& report) {
    const int W = 640, H = 480, ML = 60, MB = 40, MT = 20, MR = 20;
    double min_bpp = 1e30, max_bpp = -1e30, min_p = 1e30, max_p = -1e30;
    auto scan = [&](const RDCurve& c) {
        for (const auto& p : c.points) {
            min_bpp = std::min(min_bpp, p.bpp);
            max_bpp = std::max(max_bpp, p.bpp);
            min_p = std::min(min_p, p.psnr_db);
            max_p = std::max(max_p, p.psnr_db);
        }
    };
    scan(report.anchor_curve);
    for (const auto& [_, c] : report.curves) scan(c);
    if (max_bpp <= min_bpp) max_bpp = min_bpp + 1;
    if (max_p <= min_p) max_p = min_p + 1;

    auto sx = [&](double bpp) { return ML + (bpp - min_bpp) / (max_bpp - min_bpp) * (W - ML - MR); };
    auto sy = [&](double p) { return H - MB - (p - min_p) / (max_p - min_p) * (H - MB - MT); };

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
       << "' stroke='black'/>\n";
    os << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB << "' stroke='black'/>\n";
    os << "<text x='" << (W / 2) << "' y='" << (H - 8) << "' font-size='13'>bpp (" << report.dataset
       << ")</text>\n";
    os << "<text x='12' y='" << (H / 2) << "' font-size='13' transform='rotate(-90 12 " << (H / 2)
       << ")'>PSNR [dB]</text>\n";

    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};
    int ci = 0;
    auto draw = [&](const RDCurve& c, const std::string& name) {
        const char* col = colors[ci % 5];
        os << "<polyline fill='none' stroke='" << col << "' stroke-width='2' points='";
        for (const auto& p : c.points) os << sx(p.bpp) << "," << sy(p.psnr_db) << " ";
        os << "'/>\n";
        for (const auto& p : c.points)
            os << "<circle cx='" << sx(p.bpp) << "' cy='" << sy(p.psnr_db) << "' r='3' fill='" << col << "'/>\n";
        os << "<text x='" << (W - MR - 150) << "' y='" << (MT + 16 * (ci + 1)) << "' font-size='12' fill='" << col
           << "'>" << name << "</text>\n";
        ++ci;
    };
    draw(report.anchor_curve, "anchor");
    for (const auto& [name, c] : report.curves) draw(c, name);
    os << "</svg>\n";
    return os.str();
}

}  // namespace licda
