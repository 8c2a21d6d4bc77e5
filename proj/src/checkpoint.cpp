#include "millie/checkpoint.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

#include "millie/imageio.hpp"

namespace millie {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'L', 'L', 'I', 'E', '0', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& bytes, std::size_t pos) {
  return static_cast<std::uint32_t>(bytes[pos]) | (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
         (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
         (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string header_text(const CheckpointMeta& meta) {
  std::ostringstream h;
  h << "format\t" << meta.format_version << '\n';
  h << "seed\t" << meta.seed << '\n';
  h << "classes";
  for (const auto& c : meta.class_names) h << '\t' << c;
  h << '\n';
  h << "input_side\t" << meta.backbone.input_side << '\n';
  h << "channels";
  for (int c : meta.backbone.channels) h << '\t' << c;
  h << '\n';
  h << "learning_rate\t" << fmt_double(meta.train.learning_rate) << '\n';
  h << "max_epochs\t" << meta.train.max_epochs << '\n';
  h << "bag_size_cap\t" << meta.train.bag_size_cap << '\n';
  h << "early_stop_patience\t" << meta.train.early_stop_patience << '\n';
  h << "validation_fraction\t" << fmt_double(meta.train.validation_fraction) << '\n';
  h << "tta_replicas\t" << meta.train.tta_replicas << '\n';
  h << "train_seed\t" << meta.train.seed << '\n';
  if (!meta.stopping_reason.empty()) h << "stopping_reason\t" << meta.stopping_reason << '\n';
  return h.str();
}

std::vector<std::pair<std::string, const Tensor*>> tensor_list(const ModelParams& params) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (const auto& b : params.blocks) {
    out.emplace_back(b.weight.name, &b.weight.value);
    out.emplace_back(b.bias.name, &b.bias.value);
  }
  out.emplace_back(params.head.w1.name, &params.head.w1.value);
  out.emplace_back(params.head.b1.name, &params.head.b1.value);
  out.emplace_back(params.head.w2.name, &params.head.w2.value);
  out.emplace_back(params.head.b2.name, &params.head.b2.value);
  out.emplace_back(params.head.w3.name, &params.head.w3.value);
  out.emplace_back(params.head.b3.name, &params.head.b3.value);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

long long parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("checkpoint header has non-numeric value '" + s + "' for '" + key + "'");
  }
}

double parse_num(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("checkpoint header has non-numeric value '" + s + "' for '" + key + "'");
  }
}

}  // namespace

void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta,
                     const std::string& path) {
  const std::string header = header_text(meta);

  std::vector<std::uint8_t> body;
  for (const auto& [name, tensor] : tensor_list(params)) {
    put_u32(body, static_cast<std::uint32_t>(name.size()));
    body.insert(body.end(), name.begin(), name.end());
    put_u32(body, static_cast<std::uint32_t>(tensor->rank()));
    for (int d = 0; d < tensor->rank(); ++d)
      put_u32(body, static_cast<std::uint32_t>(tensor->dim(d)));
    for (float v : tensor->data) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(body, bits);
    }
  }

  std::vector<std::uint8_t> file;
  file.reserve(8 + 4 + header.size() + body.size() + 4);
  file.insert(file.end(), kMagic, kMagic + 8);
  put_u32(file, static_cast<std::uint32_t>(header.size()));
  file.insert(file.end(), header.begin(), header.end());
  file.insert(file.end(), body.begin(), body.end());
  const auto crc =
      static_cast<std::uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size())));
  put_u32(file, crc);
  write_file_bytes(path, file);
}

void save_checkpoint(const TrainedModel& model, std::uint64_t seed, const std::string& path) {
  CheckpointMeta meta;
  meta.seed = seed;
  meta.train = model.config;
  meta.backbone = model.params.config;
  meta.class_names = model.params.class_names;
  meta.stopping_reason = model.stopping_reason;
  save_checkpoint(model.params, meta, path);
}

ModelParams load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "MILLIE", 6) != 0)
    throw DataError("'" + path + "' is not a millie checkpoint: bad magic");
  if (bytes[6] != '0' || bytes[7] != '1')
    throw VersionError("unsupported checkpoint version '" +
                       std::string(1, static_cast<char>(bytes[6])) +
                       std::string(1, static_cast<char>(bytes[7])) + "' in '" + path +
                       "' (this build reads version 01)");
  if (bytes.size() < 12) throw IntegrityError("checkpoint '" + path + "' is truncated");
  const std::uint32_t header_len = get_u32(bytes, 8);
  const std::size_t body_start = 12 + static_cast<std::size_t>(header_len);
  if (body_start + 4 > bytes.size())
    throw IntegrityError("checkpoint '" + path + "' is truncated");

  const std::size_t body_len = bytes.size() - 4 - body_start;
  const std::uint32_t stored_crc = get_u32(bytes, bytes.size() - 4);
  const auto computed_crc = static_cast<std::uint32_t>(
      crc32(0L, bytes.data() + body_start, static_cast<uInt>(body_len)));
  if (stored_crc != computed_crc) {
    char msg[96];
    std::snprintf(msg, sizeof msg, "checkpoint CRC mismatch: stored %08x, computed %08x",
                  stored_crc, computed_crc);
    throw IntegrityError(std::string(msg) + " in '" + path + "'");
  }

  // header
  CheckpointMeta meta;
  std::vector<std::string> classes;
  std::vector<int> channels;
  bool saw_format = false, saw_seed = false, saw_classes = false, saw_side = false,
       saw_channels = false;
  {
    const std::string header(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(body_start));
    std::istringstream in(header);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> f = split_fields(line);
      const std::string& key = f[0];
      if (key == "format") {
        meta.format_version = static_cast<int>(parse_int(f.at(1), key));
        saw_format = true;
      } else if (key == "seed") {
        meta.seed = static_cast<std::uint64_t>(parse_int(f.at(1), key));
        saw_seed = true;
      } else if (key == "classes") {
        classes.assign(f.begin() + 1, f.end());
        saw_classes = true;
      } else if (key == "input_side") {
        meta.backbone.input_side = static_cast<int>(parse_int(f.at(1), key));
        saw_side = true;
      } else if (key == "channels") {
        channels.clear();
        for (std::size_t i = 1; i < f.size(); ++i)
          channels.push_back(static_cast<int>(parse_int(f[i], key)));
        saw_channels = true;
      } else if (key == "learning_rate") {
        meta.train.learning_rate = parse_num(f.at(1), key);
      } else if (key == "max_epochs") {
        meta.train.max_epochs = static_cast<int>(parse_int(f.at(1), key));
      } else if (key == "bag_size_cap") {
        meta.train.bag_size_cap = static_cast<int>(parse_int(f.at(1), key));
      } else if (key == "early_stop_patience") {
        meta.train.early_stop_patience = static_cast<int>(parse_int(f.at(1), key));
      } else if (key == "validation_fraction") {
        meta.train.validation_fraction = parse_num(f.at(1), key);
      } else if (key == "tta_replicas") {
        meta.train.tta_replicas = static_cast<int>(parse_int(f.at(1), key));
      } else if (key == "train_seed") {
        meta.train.seed = static_cast<std::uint64_t>(parse_int(f.at(1), key));
      } else if (key == "stopping_reason") {
        meta.stopping_reason = f.size() > 1 ? f[1] : "";
      }
      // unknown keys are ignored so later minor revisions can add fields
    }
  }
  if (!saw_format || !saw_seed || !saw_classes || !saw_side || !saw_channels)
    throw DataError("checkpoint '" + path + "' header is missing required keys");
  if (meta.format_version != 1)
    throw VersionError("unsupported checkpoint format " + std::to_string(meta.format_version) +
                       " in '" + path + "' (this build reads format 1)");
  meta.backbone.channels = channels;
  meta.class_names = classes;

  // body records
  std::map<std::string, Tensor> tensors;
  std::size_t pos = body_start;
  const std::size_t body_end = body_start + body_len;
  auto need = [&](std::size_t n) {
    if (pos + n > body_end) throw DataError("checkpoint '" + path + "' has a malformed record");
  };
  while (pos < body_end) {
    need(4);
    const std::uint32_t name_len = get_u32(bytes, pos);
    pos += 4;
    if (name_len == 0 || name_len > 4096)
      throw DataError("checkpoint '" + path + "' has a malformed record");
    need(name_len);
    std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + name_len));
    pos += name_len;
    need(4);
    const std::uint32_t rank = get_u32(bytes, pos);
    pos += 4;
    if (rank > 8) throw DataError("checkpoint '" + path + "' has a malformed record");
    std::vector<int> dims;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      need(4);
      const std::uint32_t v = get_u32(bytes, pos);
      pos += 4;
      if (v == 0 || v > (1u << 24)) throw DataError("checkpoint '" + path + "' has a malformed record");
      dims.push_back(static_cast<int>(v));
      numel *= v;
      if (numel > (std::size_t{1} << 30))
        throw DataError("checkpoint '" + path + "' has a malformed record");
    }
    need(numel * 4);
    Tensor t = Tensor::zeros(dims);
    for (std::size_t i = 0; i < numel; ++i) {
      const std::uint32_t bits = get_u32(bytes, pos);
      pos += 4;
      float v;
      std::memcpy(&v, &bits, 4);
      t.data[i] = v;
    }
    if (!tensors.emplace(std::move(name), std::move(t)).second)
      throw DataError("checkpoint '" + path + "' repeats a tensor name");
  }

  // assemble and shape-check against the declared config
  ModelParams params;
  params.config = meta.backbone;
  params.class_names = meta.class_names;
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw DataError("checkpoint '" + path + "' is missing tensor '" + name + "'");
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };
  for (std::size_t i = 0; i < meta.backbone.channels.size(); ++i) {
    const std::string prefix = "backbone.conv" + std::to_string(i + 1);
    ConvBlock block{Parameter(prefix + ".weight", take(prefix + ".weight")),
                    Parameter(prefix + ".bias", take(prefix + ".bias"))};
    params.blocks.push_back(std::move(block));
  }
  params.head.w1 = Parameter("head.fc1.weight", take("head.fc1.weight"));
  params.head.b1 = Parameter("head.fc1.bias", take("head.fc1.bias"));
  params.head.w2 = Parameter("head.fc2.weight", take("head.fc2.weight"));
  params.head.b2 = Parameter("head.fc2.bias", take("head.fc2.bias"));
  params.head.w3 = Parameter("head.fc3.weight", take("head.fc3.weight"));
  params.head.b3 = Parameter("head.fc3.bias", take("head.fc3.bias"));
  if (!tensors.empty())
    throw DataError("checkpoint '" + path + "' has an unexpected tensor '" +
                    tensors.begin()->first + "'");

  int c_in = 3;
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const Tensor& w = params.blocks[i].weight.value;
    const int c_out = meta.backbone.channels[i];
    if (w.rank() != 4 || w.dim(0) != c_out || w.dim(1) != c_in || w.dim(2) != 3 || w.dim(3) != 3)
      throw DataError("checkpoint '" + path + "' tensor '" + params.blocks[i].weight.name +
                      "' has shape " + shape_str(w.shape()) + ", inconsistent with the header");
    if (params.blocks[i].bias.value.rank() != 1 || params.blocks[i].bias.value.dim(0) != c_out)
      throw DataError("checkpoint '" + path + "' tensor '" + params.blocks[i].bias.name +
                      "' has shape " + shape_str(params.blocks[i].bias.value.shape()) +
                      ", inconsistent with the header");
    c_in = c_out;
  }
  params.validate();

  if (meta_out != nullptr) *meta_out = meta;
  return params;
}

}  // namespace millie
