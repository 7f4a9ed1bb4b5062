#!/usr/bin/env node
// Reference detector plugin in JavaScript: the protocol is plain
// newline-delimited JSON over stdio, so any runtime can ship one.
// Behaves like the constant detector: fixed soft label for every frame
// with a face, 1.0/"real" for frames carrying the uniform green
// no-face sentinel.

'use strict';

const fs = require('fs');
const readline = require('readline');

function arg(name, fallback) {
  const i = process.argv.indexOf(name);
  return i >= 0 && i + 1 < process.argv.length ? process.argv[i + 1] : fallback;
}

const detectorId = arg('--id', 'mock-constant-node');
const value = parseFloat(arg('--value', '0.75'));
const tau = parseFloat(arg('--tau', '0.5'));

function readPpm(path) {
  const data = fs.readFileSync(path);
  if (data[0] !== 0x50 || data[1] !== 0x36) throw new Error('not a P6 PPM: ' + path);
  const tokens = [];
  let pos = 2;
  while (tokens.length < 3 && pos < data.length) {
    const c = data[pos];
    if (c === 0x20 || c === 0x09 || c === 0x0d || c === 0x0a) {
      pos += 1;
    } else if (c === 0x23) { // '#' comment
      const nl = data.indexOf(0x0a, pos);
      pos = nl === -1 ? data.length : nl + 1;
    } else {
      let end = pos;
      while (end < data.length && ![0x20, 0x09, 0x0d, 0x0a].includes(data[end])) end += 1;
      tokens.push(parseInt(data.slice(pos, end).toString('ascii'), 10));
      pos = end;
    }
  }
  const [width, height, maxval] = tokens;
  if (maxval !== 255) throw new Error('only 8-bit PPM supported');
  const pixels = data.slice(pos + 1, pos + 1 + width * height * 3);
  if (pixels.length !== width * height * 3) throw new Error('truncated PPM: ' + path);
  return pixels;
}

function hasFace(pixels) {
  for (let i = 0; i < pixels.length; i += 3) {
    if (pixels[i] !== 0 || pixels[i + 1] !== 255 || pixels[i + 2] !== 0) return true;
  }
  return false;
}

function send(msg) {
  process.stdout.write(JSON.stringify(msg) + '\n');
}

send({ type: 'hello', protocol_version: 1, detector_id: detectorId });

const rl = readline.createInterface({ input: process.stdin, terminal: false });
rl.on('line', (line) => {
  line = line.trim();
  if (!line) return;
  const msg = JSON.parse(line);
  if (msg.type === 'hello_ack') return;
  if (msg.type === 'shutdown') process.exit(0);
  if (msg.type === 'analyze_frame') {
    const pixels = readPpm(msg.frame_path);
    let result;
    if (!hasFace(pixels)) {
      result = { soft_label: 1.0, hard_label: 'real', face_found: false };
    } else {
      const soft = Math.round(value * 1e6) / 1e6;
      result = { soft_label: soft, hard_label: soft < tau ? 'fake' : 'real', face_found: true };
    }
    result.type = 'frame_score';
    result.frame_index = msg.frame_index;
    send(result);
  }
});
rl.on('close', () => process.exit(0));
