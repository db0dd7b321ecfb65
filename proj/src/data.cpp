#include "cdrop/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cdrop/error.hpp"
#include "cdrop/rng.hpp"

namespace cdrop {

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
    case Split::Train:
      break;
  }
  return "train";
}

std::size_t VectorDataset::count(Split s) const {
  std::size_t n = 0;
  for (Split v : split) n += v == s ? 1 : 0;
  return n;
}

namespace {

VectorDataset empty_dataset(std::size_t rows, std::size_t dims, std::size_t classes) {
  VectorDataset d;
  d.features = Mat(rows, dims);
  d.labels.reserve(rows);
  d.n_classes = classes;
  for (std::size_t j = 0; j < dims; ++j) d.feature_names.push_back("x" + std::to_string(j));
  return d;
}

}  // namespace

VectorDataset gen_two_spirals(std::size_t n_per_class, double noise_std, std::uint64_t seed) {
  if (n_per_class == 0) fail(ErrorCode::ConfigError, "two_spirals needs n_per_class >= 1");
  if (!(noise_std >= 0.0)) fail(ErrorCode::ConfigError, "noise_std must be nonnegative");
  constexpr double kSweep = 3.5 * M_PI;
  RandomStream rng(seed);
  VectorDataset d = empty_dataset(2 * n_per_class, 2, 2);
  std::size_t row = 0;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t cls = 0; cls < 2; ++cls) {
      const double theta = std::sqrt(rng.uniform()) * kSweep;
      const double r = theta / kSweep;
      const double phase = theta + M_PI * static_cast<double>(cls);
      d.features(row, 0) = r * std::cos(phase) + noise_std * rng.normal();
      d.features(row, 1) = r * std::sin(phase) + noise_std * rng.normal();
      d.labels.push_back(cls);
      ++row;
    }
  }
  return d;
}

VectorDataset gen_gaussian_blobs(std::size_t n_classes, std::size_t d_x, double separation,
                                 double noise_std, std::size_t n_per_class, std::uint64_t seed) {
  if (n_classes < 2) fail(ErrorCode::ConfigError, "gaussian_blobs needs at least two classes");
  if (d_x == 0 || n_per_class == 0) fail(ErrorCode::ConfigError, "gaussian_blobs needs d_x, n_per_class >= 1");
  if (!(separation >= 0.0) || !(noise_std >= 0.0)) {
    fail(ErrorCode::ConfigError, "separation and noise_std must be nonnegative");
  }
  std::vector<Vec> centres(n_classes, Vec(d_x, 0.0));
  if (d_x == 1) {
    for (std::size_t k = 0; k < n_classes; ++k) {
      centres[k][0] = separation * (static_cast<double>(k) - 0.5 * static_cast<double>(n_classes - 1));
    }
  } else {
    const double radius = separation / (2.0 * std::sin(M_PI / static_cast<double>(n_classes)));
    for (std::size_t k = 0; k < n_classes; ++k) {
      const double angle = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n_classes);
      centres[k][0] = radius * std::cos(angle);
      centres[k][1] = radius * std::sin(angle);
    }
  }
  RandomStream rng(seed);
  VectorDataset d = empty_dataset(n_classes * n_per_class, d_x, n_classes);
  std::size_t row = 0;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t k = 0; k < n_classes; ++k) {
      for (std::size_t j = 0; j < d_x; ++j) d.features(row, j) = centres[k][j] + noise_std * rng.normal();
      d.labels.push_back(k);
      ++row;
    }
  }
  return d;
}

double two_blob_bayes_accuracy(double separation, double noise_std) {
  const double z = separation / (2.0 * noise_std);
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  const auto last = s.find_last_not_of(" \t\r");
  return first == std::string::npos ? std::string{} : s.substr(first, last - first + 1);
}

}  // namespace

VectorDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  auto is_comment = [](const std::string& l) { return !l.empty() && l.front() == '#'; };
  do {
    if (!std::getline(in, line)) fail(ErrorCode::ParseError, path + ": missing header row");
    ++line_no;
  } while (is_comment(line));
  auto header = split_line(line);
  for (auto& h : header) h = trim(h);
  if (!header.empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

  std::size_t label_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "label") label_col = c;
  }
  if (label_col == header.size()) fail(ErrorCode::MissingColumn, path + ": no column named 'label'");
  if (header.size() < 2) fail(ErrorCode::MissingColumn, path + ": no feature columns");

  VectorDataset d;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_col) d.feature_names.push_back(header[c]);
  }
  const std::size_t dims = header.size() - 1;
  std::vector<double> values;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || is_comment(line)) continue;
    const auto cells = split_line(line);
    auto where = [&] { return path + ":" + std::to_string(line_no) + ": "; };
    if (cells.size() != header.size()) {
      fail(ErrorCode::ParseError, where() + "expected " + std::to_string(header.size()) + " fields, found " +
                                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      std::size_t used = 0;
      if (c == label_col) {
        long long v = -1;
        try {
          v = std::stoll(cell, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != cell.size() || cell.empty() || v < 0) {
          fail(ErrorCode::ParseError, where() + "label '" + cell + "' is not a nonnegative integer");
        }
        d.labels.push_back(static_cast<std::size_t>(v));
        max_label = std::max(max_label, static_cast<std::size_t>(v));
      } else {
        double v = 0.0;
        try {
          v = std::stod(cell, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != cell.size() || cell.empty() || !std::isfinite(v)) {
          fail(ErrorCode::ParseError, where() + "'" + cell + "' in column '" + header[c] +
                                          "' is not a finite number");
        }
        values.push_back(v);
      }
    }
  }
  if (d.labels.empty()) fail(ErrorCode::ParseError, path + ": no data rows");
  d.features.rows = d.labels.size();
  d.features.cols = dims;
  d.features.data = std::move(values);
  d.n_classes = std::max<std::size_t>(2, max_label + 1);
  return d;
}

void write_csv(const VectorDataset& data, const std::string& path, const std::string& comment) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path + "'");
  if (!comment.empty()) out << "# " << comment << '\n';
  for (const auto& name : data.feature_names) out << name << ',';
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dims(); ++j) out << data.features(i, j) << ',';
    out << data.labels[i] << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing '" + path + "'");
}

VectorDataset split(VectorDataset data, const std::array<double, 3>& fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) fail(ErrorCode::ConfigError, "split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::ConfigError, "split fractions must sum to 1");

  std::vector<std::vector<std::size_t>> by_label(data.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] >= data.n_classes) fail(ErrorCode::InvalidLabel, "label out of range");
    by_label[data.labels[i]].push_back(i);
  }
  RandomStream rng(seed);
  data.split.assign(data.size(), Split::Train);
  for (auto& rows : by_label) {
    rng.shuffle(rows.begin(), rows.end());
    const double n = static_cast<double>(rows.size());
    const auto n_val = static_cast<std::size_t>(std::floor(n * fractions[1] + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * fractions[2] + 1e-9));
    const std::size_t n_train = rows.size() - n_val - n_test;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      data.split[rows[k]] = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
    }
  }
  return data;
}

VectorDataset normalize(VectorDataset data, std::vector<std::string>* warnings) {
  const std::size_t dims = data.dims();
  const bool has_split = !data.split.empty();
  Vec mean(dims, 0.0), sd(dims, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (has_split && data.split[i] != Split::Train) continue;
    ++n;
    for (std::size_t j = 0; j < dims; ++j) mean[j] += data.features(i, j);
  }
  if (n == 0) fail(ErrorCode::EmptySplit, "normalization needs a nonempty train split");
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (has_split && data.split[i] != Split::Train) continue;
    for (std::size_t j = 0; j < dims; ++j) {
      const double dv = data.features(i, j) - mean[j];
      sd[j] += dv * dv;
    }
  }
  for (std::size_t j = 0; j < dims; ++j) {
    sd[j] = std::sqrt(sd[j] / static_cast<double>(n));
    if (sd[j] == 0.0) {
      if (warnings) {
        warnings->push_back("DegenerateFeature: '" + data.feature_names[j] +
                            "' has zero variance on the train split; left unscaled");
      }
      continue;
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      data.features(i, j) = (data.features(i, j) - mean[j]) / sd[j];
    }
  }
  data.stats = {std::move(mean), std::move(sd)};
  return data;
}

Batch view(const VectorDataset& data, Split which) {
  Batch b;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.split.empty() && data.split[i] != which) continue;
    b.inputs.push_back(data.row(i));
    b.labels.push_back(data.labels[i]);
  }
  return b;
}

}  // namespace cdrop
