#pragma once
#include <string>
#include <vector>

#include "bst/forward.hpp"

namespace bst {

// 17 significant digits, round-trip exact.
std::string fmt17(double v);

// Rows (header first) written with fmt17 for numbers. Throws Error when the file cannot be written.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows, const std::string& comment = {});

// Long format q,x1,value after a "# x2 = ..." line; x2 is the fallback when that line is absent.
void write_image_csv(const std::string& path, const PhantomImage& f);
PhantomImage read_image_csv(const std::string& path, double x2 = 0.0);

// energy_inv_A,s1[,d1],value
void write_sinogram_csv(const std::string& path, const SinogramTensor& t);
SinogramTensor read_sinogram_csv(const std::string& path);

// Little-endian float64 payload plus a JSON sidecar (path + ".json") holding shape and axes.
void write_image_binary(const std::string& path, const PhantomImage& f);
PhantomImage read_image_binary(const std::string& path);

// 8-bit binary graymap scaled from [min, max]; highest q on the top row.
void write_pgm(const std::string& path, const PhantomImage& f);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace bst
