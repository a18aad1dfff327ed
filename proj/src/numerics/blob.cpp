#include "stum/numerics/blob.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace stum::num {

namespace {

void write_payload_le(std::ostream& os, const std::vector<float>& data) {
  static_assert(sizeof(float) == 4);
  // Host is little-endian on every supported target; write raw.
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * 4));
}

}  // namespace

void save_blob(std::ostream& os, const Tensor& t) {
  os << "STUMT1 f32 " << t.ndim();
  for (int e : t.shape) os << ' ' << e;
  os << '\n';
  write_payload_le(os, t.data);
  check(os.good(), "save_blob: write failed");
}

void save_blob(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  check(os.is_open(), "save_blob: cannot open " + path.string());
  save_blob(os, t);
}

Tensor load_blob(std::istream& is) {
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "load_blob: missing header");
  std::istringstream hs(line);
  std::string magic, dtype;
  int ndim = -1;
  hs >> magic >> dtype >> ndim;
  check(magic == "STUMT1", "load_blob: bad magic '" + magic + "'");
  check(dtype == "f32", "load_blob: unsupported dtype '" + dtype + "'");
  check(ndim >= 0 && ndim <= 8, "load_blob: bad ndim");
  std::vector<int> shape(ndim);
  for (int i = 0; i < ndim; ++i) {
    check(static_cast<bool>(hs >> shape[i]) && shape[i] > 0, "load_blob: bad extent");
  }
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.numel() * 4));
  check(static_cast<size_t>(is.gcount()) == t.numel() * 4, "load_blob: truncated payload");
  return t;
}

Tensor load_blob(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.is_open(), "load_blob: cannot open " + path.string());
  return load_blob(is);
}

}  // namespace stum::num
