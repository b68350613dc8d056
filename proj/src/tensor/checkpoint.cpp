#include "cellprog/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'G', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::kData, "checkpoint: truncated file");
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const ParamStore& params) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& name = params.name(p);
    const auto& t = params.at(p);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamStore decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader in(bytes);
  if (in.str(4) != std::string(kMagic, 4)) throw Error(ErrorCode::kData, "checkpoint: bad magic, expected CPG1");
  const auto count = in.uint(4);
  ParamStore store;
  for (std::uint64_t p = 0; p < count; ++p) {
    const auto name = in.str(in.uint(4));
    const auto rank = in.uint(4);
    if (rank == 0 || rank > 8) throw Error(ErrorCode::kData, "checkpoint: bad rank for " + name);
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(in.uint(8));
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(in.uint(8));
    store.add(name, Tensor::from(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw Error(ErrorCode::kData, "checkpoint: trailing bytes");
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot write checkpoint " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorCode::kIo, "failed writing checkpoint " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot read checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void assign_params(ParamStore& target, const ParamStore& source) {
  if (target.size() != source.size()) {
    throw Error(ErrorCode::kConfig, "checkpoint has " + std::to_string(source.size()) +
                                        " parameters, model expects " + std::to_string(target.size()));
  }
  for (std::size_t p = 0; p < target.size(); ++p) {
    if (target.name(p) != source.name(p) || target.at(p).shape() != source.at(p).shape()) {
      throw Error(ErrorCode::kConfig, "checkpoint parameter " + source.name(p) + " " +
                                          shape_str(source.at(p).shape()) + " does not match model parameter " +
                                          target.name(p) + " " + shape_str(target.at(p).shape()));
    }
  }
  for (std::size_t p = 0; p < target.size(); ++p) {
    auto dst = target.at(p).mutable_data();
    const auto src = source.at(p).data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace cellprog
