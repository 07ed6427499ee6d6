#include "structmerge/token_graph.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace structmerge {

void validate_partition(const Partition& partition, int n) {
    std::vector<char> seen(n, 0);
    for (const auto& group : partition) {
        if (group.empty()) throw PartitionError("partition: empty group");
        for (int u : group) {
            if (u < 0 || u >= n) throw PartitionError("partition: index out of range");
            if (seen[u]) throw PartitionError("partition: groups not disjoint");
            seen[u] = 1;
        }
    }
    for (int u = 0; u < n; ++u)
        if (!seen[u]) throw PartitionError("partition: node not covered");
}

TokenGraph cosine_affinity_graph(const Eigen::MatrixXd& tokens, bool include_self_loops) {
    const int n = static_cast<int>(tokens.rows());
    Eigen::MatrixXd unit = tokens;
    for (int i = 0; i < n; ++i) {
        const double norm = unit.row(i).norm();
        if (norm <= 0.0) throw ZeroNormError("cosine_affinity_graph: zero-norm token");
        unit.row(i) /= norm;
    }
    TokenGraph g;
    g.weights = ((unit * unit.transpose()).array() + 1.0) / 2.0;
    // symmetrize away round-off so laplacians stay exactly symmetric
    g.weights = ((g.weights + g.weights.transpose()) / 2.0).eval();
    if (!include_self_loops) g.weights.diagonal().setZero();
    else g.weights.diagonal().setOnes();

    const double min_degree = g.degrees().minCoeff();
    if (min_degree < kDegreeFloor) {
        g.weights.diagonal().array() += kDegreeFloor - min_degree;
        g.degree_floored = true;
    }
    return g;
}

Laplacians laplacians(const TokenGraph& graph) {
    const Eigen::VectorXd d = graph.degrees();
    if ((d.array() <= 0.0).any()) throw ShapeError("laplacians: zero degree");
    const Eigen::VectorXd inv_sqrt = d.array().rsqrt();
    Laplacians out;
    out.combinatorial = Eigen::MatrixXd(d.asDiagonal()) - graph.weights;
    out.normalized = Eigen::MatrixXd::Identity(graph.size(), graph.size()) -
                     inv_sqrt.asDiagonal() * graph.weights * inv_sqrt.asDiagonal();
    out.normalized = ((out.normalized + out.normalized.transpose()) / 2.0).eval();
    return out;
}

TokenGraph coarsen(const TokenGraph& graph, const Partition& partition,
                   CoarseningConvention convention) {
    const int N = graph.size();
    validate_partition(partition, N);
    const int n = static_cast<int>(partition.size());
    TokenGraph out;
    out.weights = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double s = 0.0;
            for (int u : partition[i])
                for (int v : partition[j]) s += graph.weights(u, v);
            if (convention == CoarseningConvention::BlockAverage)
                s /= static_cast<double>(partition[i].size()) * partition[j].size();
            out.weights(i, j) = s;
            out.weights(j, i) = s;
        }
    }
    return out;
}

TokenGraph lift(const TokenGraph& coarse, const Partition& partition, int original_nodes) {
    if (coarse.size() != static_cast<int>(partition.size()))
        throw PartitionError("lift: coarse node count != group count");
    validate_partition(partition, original_nodes);
    TokenGraph out;
    out.weights = Eigen::MatrixXd::Zero(original_nodes, original_nodes);
    for (int i = 0; i < coarse.size(); ++i)
        for (int j = 0; j < coarse.size(); ++j)
            for (int u : partition[i])
                for (int v : partition[j]) out.weights(u, v) = coarse.weights(i, j);
    out.partition = partition;
    return out;
}

std::string token_graph_to_json(const TokenGraph& graph) {
    nlohmann::ordered_json j;
    const int n = graph.size();
    j["N"] = n;
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) w.push_back(graph.weights(i, k));
    j["weights"] = w;
    if (graph.partition) j["partition"] = *graph.partition;
    return j.dump();
}

TokenGraph token_graph_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("token graph json: ") + e.what());
    }
    const int n = j.at("N").get<int>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(n) * n)
        throw ShapeError("token graph json: weight count != N*N");
    TokenGraph g;
    g.weights.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) g.weights(i, k) = w[static_cast<std::size_t>(i) * n + k];
    if (j.contains("partition")) {
        g.partition = j.at("partition").get<Partition>();
        validate_partition(*g.partition, n);
    }
    return g;
}

}  // namespace structmerge
