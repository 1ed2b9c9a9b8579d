#pragma once

// Data-parallel kernels. Each exists as an OpenMP version and a serial
// reference with identical arithmetic per element, so outputs match bit for bit.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "discover/encoder.hpp"
#include "discover/execution.hpp"
#include "discover/retrieval.hpp"
#include "discover/synthcover.hpp"

namespace discover::kernels {

namespace serial {
Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& normalized);
std::vector<retrieval::QueryOutcome> score_queries(const Eigen::MatrixXd& similarity, std::span<const int> ids,
                                                   std::span<const int> songs);
Eigen::MatrixXd encode_all(const Encoder& encoder, const synthcover::Corpus& corpus, std::span<const int> ids);
}  // namespace serial

namespace parallel {
Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& normalized);
std::vector<retrieval::QueryOutcome> score_queries(const Eigen::MatrixXd& similarity, std::span<const int> ids,
                                                   std::span<const int> songs);
Eigen::MatrixXd encode_all(const Encoder& encoder, const synthcover::Corpus& corpus, std::span<const int> ids);
}  // namespace parallel

Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& normalized, Execution exec);
std::vector<retrieval::QueryOutcome> score_queries(const Eigen::MatrixXd& similarity, std::span<const int> ids,
                                                   std::span<const int> songs, Execution exec);
Eigen::MatrixXd encode_all(const Encoder& encoder, const synthcover::Corpus& corpus, std::span<const int> ids,
                           Execution exec);

}  // namespace discover::kernels
