#include "advchar/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "advchar/error.hpp"

namespace advchar {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  const char* take(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw TruncatedCheckpointError("checkpoint truncated while reading " +
                                     std::string(what));
    }
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

json config_to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model}, {"layers", c.layers},   {"heads", c.heads},
          {"d_ff", c.d_ff},       {"max_len", c.max_len}, {"num_classes", c.num_classes},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

}  // namespace

void save_checkpoint(const Model& model, const Vocab& vocab,
                     const std::vector<std::string>& class_names,
                     const std::filesystem::path& path) {
  if (vocab.size() != model.vocab_size()) {
    throw DataError("vocab size " + std::to_string(vocab.size()) +
                    " does not match model embedding rows " +
                    std::to_string(model.vocab_size()));
  }
  if (class_names.size() != static_cast<std::size_t>(model.num_classes())) {
    throw DataError("class name count does not match model classes");
  }
  json meta;
  meta["config"] = config_to_json(model.config());
  json chars = json::array();
  for (char32_t ch : vocab.chars()) {
    std::string s;
    utf8_append(s, ch);
    chars.push_back(s);
  }
  meta["vocab"] = std::move(chars);
  meta["classes"] = class_names;
  const std::string meta_text = meta.dump();

  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  std::uint32_t count = 0;
  model.params().for_each([&](auto, const Matrix<Real>&) { ++count; });
  put_u32(out, count);
  model.params().for_each([&](std::string_view name, const Matrix<Real>& m) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
    }
  });

  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FileNotFoundError("checkpoint not found: " + path.string());
  Reader in(std::string((std::istreambuf_iterator<char>(file)),
                        std::istreambuf_iterator<char>()));

  if (std::memcmp(in.take(4, "magic"), kMagic, 4) != 0) {
    throw MagicMismatchError(path.string() + " is not an ADVC checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t meta_len = in.u32("metadata length");
  const char* meta_ptr = in.take(meta_len, "metadata");
  json meta;
  ModelConfig recorded;
  std::vector<char32_t> chars;
  std::vector<std::string> class_names;
  try {
    meta = json::parse(std::string_view(meta_ptr, meta_len));
    recorded = config_from_json(meta.at("config"));
    for (const auto& c : meta.at("vocab")) {
      const std::u32string cp = utf8_decode(c.get<std::string>());
      if (cp.size() != 1) throw CheckpointError("vocab entry is not a single character");
      chars.push_back(cp[0]);
    }
    class_names = meta.at("classes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  Vocab vocab(std::move(chars));
  const ModelConfig config = expected.value_or(recorded);
  if (class_names.size() != static_cast<std::size_t>(config.num_classes)) {
    throw CheckpointError("checkpoint lists " + std::to_string(class_names.size()) +
                          " classes but the model has " +
                          std::to_string(config.num_classes));
  }

  ParameterSet<Real> params = ParameterSet<Real>::zeros(config, vocab.size());
  std::uint32_t expected_count = 0;
  params.for_each([&](auto, const Matrix<Real>&) { ++expected_count; });
  const std::uint32_t count = in.u32("tensor count");
  if (count != expected_count) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) +
                          " tensors, model expects " + std::to_string(expected_count));
  }
  params.for_each([&](std::string_view want_name, Matrix<Real>& m) {
    const std::uint32_t name_len = in.u32("tensor name length");
    const std::string name(in.take(name_len, "tensor name"), name_len);
    if (name != want_name) {
      throw CheckpointError("expected tensor '" + std::string(want_name) + "', found '" +
                            name + "'");
    }
    const std::uint32_t ndim = in.u32("tensor rank");
    std::vector<std::uint32_t> dims;
    for (std::uint32_t i = 0; i < ndim; ++i) dims.push_back(in.u32("tensor shape"));
    const std::vector<std::uint32_t> want = {static_cast<std::uint32_t>(m.rows()),
                                             static_cast<std::uint32_t>(m.cols())};
    if (dims != want) {
      throw TensorShapeError(name, "tensor '" + name + "' has shape " + dims_string(dims) +
                                       ", expected " + dims_string(want));
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<Real>(std::bit_cast<float>(in.u32(name.c_str())));
    }
  });
  if (!in.done()) throw CheckpointError("trailing bytes after the last tensor");
  return Checkpoint{Model(config, std::move(params)), std::move(vocab),
                    std::move(class_names)};
}

}  // namespace advchar
