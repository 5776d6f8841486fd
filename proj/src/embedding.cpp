#include "lkp/embedding.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "lkp/binary_io.hpp"
#include "lkp/error.hpp"
#include "lkp/rng.hpp"

namespace lkp {

EmbeddingTable::EmbeddingTable(std::size_t num_users, std::size_t num_items, std::size_t dim)
    : num_users_(num_users),
      num_items_(num_items),
      dim_(dim),
      users_(num_users * dim, 0.0),
      items_(num_items * dim, 0.0) {}

std::span<const double> EmbeddingTable::user_checked(UserId u) const {
    if (u >= num_users_) throw LookupError("unknown user id " + std::to_string(u));
    return user(u);
}

std::span<const double> EmbeddingTable::item_checked(ItemId i) const {
    if (i >= num_items_) throw LookupError("unknown item id " + std::to_string(i));
    return item(i);
}

bool EmbeddingTable::all_finite() const noexcept {
    for (double v : users_)
        if (!std::isfinite(v)) return false;
    for (double v : items_)
        if (!std::isfinite(v)) return false;
    return true;
}

EmbeddingTable init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t dim,
                               std::uint64_t seed) {
    if (num_users == 0 || num_items == 0 || dim == 0) {
        throw ContractViolation("init_embeddings: all sizes must be positive");
    }
    EmbeddingTable table(num_users, num_items, dim);
    Rng rng = make_rng(seed, stream::kInit);
    std::normal_distribution<double> normal(0.0, 0.01);
    for (double& v : table.user_data()) v = normal(rng);
    for (double& v : table.item_data()) v = normal(rng);
    return table;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ContractViolation("dot: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void save_model(const EmbeddingTable& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << "lkp-model v1 " << model.num_users() << ' ' << model.num_items() << ' ' << model.dim()
        << '\n';
    detail::write_f64_le(out, model.user_data());
    detail::write_f64_le(out, model.item_data());
    if (!out) throw DataError("write failed: " + path.string());
}

EmbeddingTable load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model checkpoint " + path.string());
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic, version;
    std::size_t users = 0, items = 0, dim = 0;
    if (!(hs >> magic >> version >> users >> items >> dim) || magic != "lkp-model" || version != "v1") {
        throw DataError("bad model checkpoint header in " + path.string());
    }
    EmbeddingTable table(users, items, dim);
    detail::read_f64_le(in, table.user_data());
    detail::read_f64_le(in, table.item_data());
    return table;
}

} // namespace lkp
