#include "prism/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "prism/spec_json.hpp"

namespace prism {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'I', 'S', 'M', 'C', 'K', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, const double* p, std::size_t n) {
  static_assert(sizeof(double) == 8);
  // doubles are IEEE-754 little-endian on every supported target
  out.write(reinterpret_cast<const char*>(p), std::streamsize(n * 8));
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw CheckpointError("checkpoint '" + path + "' is truncated");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw CheckpointError("checkpoint '" + path + "' is truncated");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name,
                  const Tensor& t) {
  write_u32(out, std::uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  write_u32(out, std::uint32_t(t.rank()));
  for (std::size_t d : t.shape()) write_u64(out, d);
  write_f64(out, t.data(), t.size());
}

Tensor read_tensor(std::istream& in, const std::string& path,
                   std::string& name) {
  const std::uint32_t name_len = read_u32(in, path);
  if (name_len > 4096) {
    throw CheckpointError("checkpoint '" + path + "': absurd tensor name");
  }
  name.resize(name_len);
  if (!in.read(name.data(), name_len)) {
    throw CheckpointError("checkpoint '" + path + "' is truncated");
  }
  const std::uint32_t rank = read_u32(in, path);
  if (rank > 8) {
    throw CheckpointError("checkpoint '" + path + "': absurd tensor rank");
  }
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = std::size_t(read_u64(in, path));
    n *= shape[i];
  }
  if (n > (std::size_t(1) << 32)) {
    throw CheckpointError("checkpoint '" + path + "': absurd tensor size");
  }
  std::vector<double> data(n);
  if (!in.read(reinterpret_cast<char*>(data.data()), std::streamsize(n * 8))) {
    throw CheckpointError("checkpoint '" + path + "' is truncated");
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 8);
  nlohmann::json meta{{"model", to_json(ck.config)},
                      {"channels", ck.channels},
                      {"seed", ck.seed}};
  const std::string js = meta.dump();
  write_u64(out, js.size());
  out.write(js.data(), std::streamsize(js.size()));

  const auto names = param_names(ck.params);
  const auto tensors = param_tensors(ck.params);
  write_u64(out, tensors.size() + 2);
  write_tensor(out, "norm.mean",
               Tensor({ck.norm.mean.size()}, ck.norm.mean));
  write_tensor(out, "norm.std", Tensor({ck.norm.std.size()}, ck.norm.std));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    write_tensor(out, names[i], *tensors[i]);
  }
  if (!out) throw CheckpointError("write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError("'" + path + "' is not a model checkpoint");
  }
  const std::uint64_t jlen = read_u64(in, path);
  if (jlen > (1u << 20)) {
    throw CheckpointError("checkpoint '" + path + "': absurd header size");
  }
  std::string js(jlen, '\0');
  if (!in.read(js.data(), std::streamsize(jlen))) {
    throw CheckpointError("checkpoint '" + path + "' is truncated");
  }
  Checkpoint ck;
  try {
    const nlohmann::json meta = nlohmann::json::parse(js);
    ck.config = config_from_json(meta.at("model"));
    ck.channels = meta.at("channels").get<std::size_t>();
    ck.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "': bad header: " +
                          e.what());
  }

  const std::uint64_t count = read_u64(in, path);
  std::map<std::string, Tensor> loaded;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name;
    Tensor t = read_tensor(in, path, name);
    loaded.emplace(std::move(name), std::move(t));
  }

  ck.params = zero_params(ck.config);
  const auto names = param_names(ck.params);
  auto tensors = param_tensors(ck.params);
  const auto take = [&](const std::string& name) -> Tensor {
    auto it = loaded.find(name);
    if (it == loaded.end()) {
      throw CheckpointError("checkpoint '" + path + "': missing tensor '" +
                            name + "'");
    }
    return std::move(it->second);
  };
  Tensor nm = take("norm.mean");
  Tensor ns = take("norm.std");
  if (nm.size() != ck.channels || ns.size() != ck.channels) {
    throw CheckpointError("checkpoint '" + path +
                          "': normalization stats do not match channel count");
  }
  ck.norm.mean.assign(nm.data(), nm.data() + nm.size());
  ck.norm.std.assign(ns.data(), ns.data() + ns.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor t = take(names[i]);
    if (!t.same_shape(*tensors[i])) {
      throw CheckpointError("checkpoint '" + path + "': tensor '" + names[i] +
                            "' has shape " + shape_str(t.shape()) +
                            ", config implies " +
                            shape_str(tensors[i]->shape()));
    }
    *tensors[i] = std::move(t);
  }
  return ck;
}

}  // namespace prism
