#pragma once

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "licda/bitstream.hpp"
#include "licda/data.hpp"
#include "licda/metrics.hpp"
#include "licda/model.hpp"

namespace licda {

struct EvalDataset {
    std::string name;
    std::vector<DatasetItem> items;  // labels are adapter domain ids, or -1 when unmapped
};

struct QualityPoint {
    int quality = 0;
    double bpp = 0;
    double psnr_anchor = 0;
    std::map<std::string, double> psnr;  // policy name -> mean PSNR
};

struct DatasetReport {
    std::string dataset;
    std::vector<QualityPoint> points;
    std::vector<double> mean_v;  // averaged decoded gate distribution
    RDCurve anchor_curve;
    std::map<std::string, RDCurve> curves;
    std::map<std::string, BdResult> bd;         // policy -> BD vs anchor
    std::map<std::string, std::string> bd_error;  // surfaced per dataset
};

struct EvalReport {
    std::vector<DatasetReport> datasets;
    std::int64_t encoder_params = 0, decoder_params = 0, adapter_params = 0, gate_params = 0;

    nlohmann::ordered_json to_json() const;
    std::string to_text() const;
    std::string records_jsonl() const;  // one record per dataset x quality x policy
};

// Evaluates adapted checkpoints (one per quality, >= 4) against their own
// adapter-free backbone as the anchor. Every image is carried through the
// real bitstream: bpp comes from encoded bytes, reconstructions from the
// decoded latent.
EvalReport evaluate_model(std::vector<CodecModel<float>>& models, const std::vector<EvalDataset>& datasets,
                          const std::vector<PolicyKind>& policies, ImageCache& cache,
                          BdVariant variant = BdVariant::kCubic);

// Minimal RD plot (PSNR vs bpp) as an SVG document.
std::string render_rd_svg(const DatasetReport& report);

}  // namespace licda
