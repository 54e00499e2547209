#include "mei3d/rbf.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mei3d/errors.hpp"

namespace mei3d {

void RbfField::validate() const {
    if (centers.empty()) throw Error("RbfField: needs at least one kernel");
    if (offsets.size() != centers.size() || log_scales.size() != centers.size()) {
        throw Error("RbfField: centers/offsets/log_scales size mismatch");
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
        if (!finite(centers[k]) || !finite(offsets[k]) || !std::isfinite(log_scales[k])) {
            throw Error("RbfField: non-finite parameter at kernel " + std::to_string(k));
        }
    }
}

RbfField make_identity_field(const Mesh& base, double sigma0) {
    RbfField field;
    field.centers = base.vertices;
    field.offsets.assign(base.vertices.size(), Vec3{});
    double sigma = sigma0;
    if (sigma <= 0.0) {
        Topology topo = build_topology(base);
        sigma = mean_edge_length(base, topo);
        if (sigma <= 0.0) sigma = 1.0;
    }
    field.log_scales.assign(base.vertices.size(), std::log(sigma));
    return field;
}

DeformedMesh deform(const Mesh& base, const RbfField& field) {
    field.validate();
    DeformedMesh out;
    out.base = &base;
    out.vertices.resize(base.vertices.size());

    const std::size_t K = field.kernel_count();
    std::vector<double> inv_two_sigma2(K);
    for (std::size_t k = 0; k < K; ++k) {
        double sigma = std::exp(field.log_scales[k]);
        inv_two_sigma2[k] = 1.0 / (2.0 * sigma * sigma);
    }

    for (std::size_t i = 0; i < base.vertices.size(); ++i) {
        const Vec3 v = base.vertices[i];
        Vec3 dv{};
        for (std::size_t k = 0; k < K; ++k) {
            double w = std::exp(-norm2(v - field.centers[k]) * inv_two_sigma2[k]);
            dv += field.offsets[k] * w;
        }
        out.vertices[i] = v + dv;
    }
    return out;
}

RbfAdjoint deform_gradient(const Mesh& base, const RbfField& field,
                           const std::vector<Vec3>& vertex_adjoint) {
    field.validate();
    if (vertex_adjoint.size() != base.vertices.size()) {
        throw Error("deform_gradient: vertex_adjoint length " + std::to_string(vertex_adjoint.size()) +
                    " != vertex count " + std::to_string(base.vertices.size()));
    }

    const std::size_t K = field.kernel_count();
    RbfAdjoint adj;
    adj.offset_adjoint.assign(K, Vec3{});
    adj.log_scale_adjoint.assign(K, 0.0);

    std::vector<double> inv_sigma2(K);
    for (std::size_t k = 0; k < K; ++k) {
        double sigma = std::exp(field.log_scales[k]);
        inv_sigma2[k] = 1.0 / (sigma * sigma);
    }

    // v'_i = v_i + sum_k delta_k w_ik, w_ik = exp(-r2/(2 sigma^2));
    // dw/dlog_sigma = w * r2 / sigma^2.
    for (std::size_t i = 0; i < base.vertices.size(); ++i) {
        const Vec3 v = base.vertices[i];
        const Vec3 vbar = vertex_adjoint[i];
        if (vbar.x == 0.0 && vbar.y == 0.0 && vbar.z == 0.0) continue;
        for (std::size_t k = 0; k < K; ++k) {
            double r2 = norm2(v - field.centers[k]);
            double w = std::exp(-0.5 * r2 * inv_sigma2[k]);
            adj.offset_adjoint[k] += vbar * w;
            adj.log_scale_adjoint[k] += dot(vbar, field.offsets[k]) * w * r2 * inv_sigma2[k];
        }
    }
    return adj;
}

std::vector<double> field_to_params(const RbfField& field) {
    const std::size_t K = field.kernel_count();
    std::vector<double> p(4 * K);
    for (std::size_t k = 0; k < K; ++k) {
        p[3 * k + 0] = field.offsets[k].x;
        p[3 * k + 1] = field.offsets[k].y;
        p[3 * k + 2] = field.offsets[k].z;
    }
    for (std::size_t k = 0; k < K; ++k) p[3 * K + k] = field.log_scales[k];
    return p;
}

void params_to_field(const std::vector<double>& params, RbfField& field) {
    const std::size_t K = field.kernel_count();
    if (params.size() != 4 * K) throw Error("params_to_field: size mismatch");
    for (std::size_t k = 0; k < K; ++k) {
        field.offsets[k] = {params[3 * k + 0], params[3 * k + 1], params[3 * k + 2]};
    }
    for (std::size_t k = 0; k < K; ++k) field.log_scales[k] = params[3 * K + k];
}

void save_field(const RbfField& field, const std::string& path) {
    field.validate();
    nlohmann::json j;
    auto vecs = [](const std::vector<Vec3>& vs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : vs) arr.push_back({v.x, v.y, v.z});
        return arr;
    };
    j["centers"] = vecs(field.centers);
    j["offsets"] = vecs(field.offsets);
    j["log_scales"] = field.log_scales;

    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(1, '\t') << "\n";
    if (!out) throw IoError("write failed: " + path);
}

RbfField load_field(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open field file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed field file " + path + ": " + e.what());
    }

    RbfField field;
    try {
        auto read_vecs = [](const nlohmann::json& arr) {
            std::vector<Vec3> out;
            out.reserve(arr.size());
            for (const auto& v : arr) out.push_back({v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()});
            return out;
        };
        field.centers = read_vecs(j.at("centers"));
        field.offsets = read_vecs(j.at("offsets"));
        field.log_scales = j.at("log_scales").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed field file " + path + ": " + e.what());
    }
    field.validate();
    return field;
}

}  // namespace mei3d
